#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "unav/tdm.hpp"
#include "unav/world.hpp"

namespace unav {

// --- High-level decision records ---

enum class TurnDirection { front, left, right, back };

const char* to_string(TurnDirection d);
std::optional<TurnDirection> turn_direction_from_string(const std::string& s);

struct TurnAction {
  TurnDirection dir = TurnDirection::front;
};
struct BacktrackAction {
  int waypoint_id = 0;
};
struct GoStairAction {
  bool up = true;
};
struct DoubleCheckAction {
  bool stop = true;
  std::string answer;  // question-answering tasks ride the answer here
};

using LangAction =
    std::variant<TurnAction, BacktrackAction, GoStairAction, DoubleCheckAction>;

std::string action_to_text(const LangAction& a);

struct LangDecision {
  std::string progress_analysis;
  std::string reasoning_todo;
  std::string reasoning_action;
  std::vector<TodoUpdateOp> todo_ops;
  LangAction action;
  std::vector<std::string> warnings;
};

struct BBox {
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;
};
struct PixelPoint {
  int u = 0, v = 0;
};

struct VisDecision {
  bool is_box = true;
  BBox box;
  PixelPoint point;
  std::string target_desc;
  std::vector<std::string> warnings;
};

// --- Prompt payloads (the only data a backend ever sees) ---

struct EncodedImage {
  std::string caption;
  std::string png;  // raw PNG bytes
};

struct PromptPayload {
  std::string role;  // "lang" | "vis"
  std::vector<std::string> text_blocks;
  std::vector<EncodedImage> images;
  std::string task_family;
  int step_index = 0;
  bool recovery = false;      // built by build_recovery_prompt
  bool verification = false;  // stop-confirmation sub-call
  bool init = false;          // dedicated checklist-initialization call
};

std::string serialize_lang_decision(const LangDecision& d);
std::string serialize_vis_decision(const VisDecision& d);

// --- Parsing (fault-tolerant recovery ladder) ---

/// Ladder: strict JSON -> fence-stripped -> first balanced {...} substring;
/// field aliases accepted; missing todo_ops is an empty batch. Throws
/// UnparseableDecision when every rung fails.
LangDecision parse_lang_response(const std::string& raw);

/// Same ladder. Out-of-bounds boxes clamp with a warning; a degenerate box
/// collapses to its center point.
VisDecision parse_vis_response(const std::string& raw, int image_width,
                               int image_height);

/// Stop-confirmation replies: {"confirm": "yes"|"no", "reasoning": ...}.
bool parse_verification_response(const std::string& raw);

// --- Prompt builders (deterministic templates) ---

struct HistoryEntry {
  int waypoint_id = 0;
  std::string caption;
};

PromptPayload build_lang_prompt(const TaskSpec& task,
                                const PanoramaObservation& panorama,
                                const std::vector<HistoryEntry>& history,
                                const TodoList* todo,  // null = no checklist
                                int step_index, double max_range);

PromptPayload build_vis_prompt(const TaskSpec& task, const View& view,
                               const std::string& direction, int step_index,
                               double max_range);

PromptPayload build_recovery_prompt(const TaskSpec& task,
                                    const PanoramaObservation& waypoint_pano,
                                    TurnDirection failed_dir,
                                    const std::vector<EncodedImage>& frames,
                                    int step_index, double max_range);

PromptPayload build_init_prompt(const TaskSpec& task);

PromptPayload build_verification_prompt(const TaskSpec& task,
                                        const PanoramaObservation& panorama,
                                        int step_index, double max_range);

/// Initial checklist proposals: {"items": ["...", ...]}.
std::vector<std::string> parse_init_response(const std::string& raw);

// --- Backend boundary ---

/// Ground-truth side channel for scripted backends. The runner keeps one
/// instance per episode and refreshes it before every decide call; remote
/// backends never read it.
class WaypointBuffer;

struct SimContext {
  const WorldModel* world = nullptr;
  const AgentState* agent = nullptr;
  const PanoramaObservation* panorama = nullptr;
  const View* vis_view = nullptr;
  /// Visited-waypoint history; scripted backends may cite entries in
  /// Backtrack actions. Null outside episode runs.
  const WaypointBuffer* waypoints = nullptr;
  std::string vis_target_label;
  std::string vis_direction;
};

class DecisionBackend {
 public:
  virtual ~DecisionBackend() = default;
  virtual std::string decide_lang(const PromptPayload& payload) = 0;
  virtual std::string decide_vis(const PromptPayload& payload) = 0;
  /// Scripted backends read simulator truth through this; default ignores.
  virtual void set_sim_context(const SimContext* ctx) { (void)ctx; }
  /// Reseeds backend stochasticity only (three-seed protocol).
  virtual void reseed(unsigned seed) { (void)seed; }
  virtual std::string name() const = 0;
};

// --- Scripted backends ---

/// Pure decision functions behind the oracle backend, exposed for tests.
LangDecision oracle_lang_decide(const WorldModel& world,
                                const AgentState& agent,
                                int next_subgoal_index);
/// `route_pixel`, when set, is used after label matching fails, ahead of the
/// distal free-space fallback.
VisDecision oracle_vis_decide(
    const View& view, const std::string& target_label,
    const std::vector<std::string>& label_table,
    const std::optional<PixelPoint>& route_pixel = std::nullopt);

/// Ground-truth backend: plans on the true map, completes checklist items as
/// sub-goals enter the success radius, confirms stops geodesically.
/// `forgetful` makes sub-goal progress depend entirely on the checklist text
/// in the prompt: without a checklist block it pursues the first sub-goal
/// forever.
std::unique_ptr<DecisionBackend> make_oracle_backend(bool forgetful = false);

/// Seeded corruption wrapper: with probability error_rate per language
/// decision, a Turn direction is replaced by a uniformly different one.
/// Stop confirmations, verification calls, and recovery re-decisions pass
/// through untouched.
std::unique_ptr<DecisionBackend> make_faulty_backend(
    std::unique_ptr<DecisionBackend> inner, double error_rate, unsigned seed);

}  // namespace unav
