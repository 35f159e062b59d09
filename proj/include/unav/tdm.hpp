#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unav/errors.hpp"

namespace unav {

enum class TodoStatus { pending, completed };

const char* to_string(TodoStatus s);

struct TodoItem {
  std::string content;
  TodoStatus status = TodoStatus::pending;
  std::string result;  // non-empty whenever status is completed

  bool operator==(const TodoItem&) const = default;
};

struct TodoList {
  std::vector<TodoItem> items;
  int revision = 0;

  bool operator==(const TodoList&) const = default;
};

/// One checklist edit. Indices are 1-based positions in the list as it was
/// before the whole batch was applied.
struct TodoUpdateOp {
  enum class Kind { update, rewrite, add, remove };
  Kind kind = Kind::update;
  int index = 0;                    // update / rewrite / remove / add-at
  TodoStatus status = TodoStatus::pending;  // update
  std::string result;               // update
  std::string content;              // rewrite / add
  bool has_index = true;            // add without index appends

  static TodoUpdateOp update_op(int i, TodoStatus s, std::string result);
  static TodoUpdateOp rewrite_op(int i, std::string content);
  static TodoUpdateOp add_op(std::string content,
                             std::optional<int> index = std::nullopt);
  static TodoUpdateOp remove_op(int i);
};

/// Fresh checklist: every sub-goal pending with an empty result, revision 0.
TodoList init_list(const std::vector<std::string>& subgoal_texts);

/// Applies a batch in order against a working copy. Never fails: a completed
/// status with an empty result is rolled back to pending, out-of-range
/// indices skip the op, and every rejection lands in the warning list.
/// Revision increments exactly once per batch.
TodoList apply(const TodoList& list, const std::vector<TodoUpdateOp>& ops,
               std::vector<std::string>& warnings);

/// Compact textual form: header plus one line per item with index, status
/// glyph, content, and result. Deterministic and injective.
std::string render_text(const TodoList& list);

}  // namespace unav
