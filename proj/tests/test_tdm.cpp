#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <string>
#include <vector>

#include "unav/tdm.hpp"

using namespace unav;

namespace {

// Straight-line reference interpreter for apply(). Tracks, for every surviving
// position, which 1-based pre-batch index it carries (0 for in-batch adds) and
// replays one op at a time with no shared machinery.
TodoList reference_apply(const TodoList& list,
                         const std::vector<TodoUpdateOp>& ops,
                         int* warning_count = nullptr) {
  std::vector<TodoItem> items = list.items;
  std::vector<int> origin(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    origin[i] = static_cast<int>(i) + 1;
  }
  int warnings = 0;
  auto position_of = [&](int pre_batch_index) {
    if (pre_batch_index < 1) return -1;
    for (std::size_t p = 0; p < origin.size(); ++p) {
      if (origin[p] == pre_batch_index) return static_cast<int>(p);
    }
    return -1;
  };

  for (const TodoUpdateOp& op : ops) {
    switch (op.kind) {
      case TodoUpdateOp::Kind::update: {
        const int p = position_of(op.index);
        if (p < 0) {
          ++warnings;
        } else if (op.status == TodoStatus::completed && op.result.empty()) {
          ++warnings;  // rolled back, item untouched
        } else {
          items[p].status = op.status;
          items[p].result = op.result;
        }
        break;
      }
      case TodoUpdateOp::Kind::rewrite: {
        const int p = position_of(op.index);
        if (p < 0) {
          ++warnings;
        } else {
          items[p].content = op.content;
        }
        break;
      }
      case TodoUpdateOp::Kind::add: {
        std::size_t at = items.size();
        if (op.has_index) {
          for (std::size_t p = 0; p < items.size(); ++p) {
            if (origin[p] != 0 && origin[p] >= op.index) {
              at = p;
              break;
            }
          }
        }
        items.insert(items.begin() + at,
                     TodoItem{op.content, TodoStatus::pending, ""});
        origin.insert(origin.begin() + at, 0);
        break;
      }
      case TodoUpdateOp::Kind::remove: {
        const int p = position_of(op.index);
        if (p < 0) {
          ++warnings;
        } else {
          if (items[p].status == TodoStatus::completed) ++warnings;
          items.erase(items.begin() + p);
          origin.erase(origin.begin() + p);
        }
        break;
      }
    }
  }
  if (warning_count != nullptr) *warning_count = warnings;
  TodoList out;
  out.items = items;
  out.revision = list.revision + 1;
  return out;
}

TodoList sample_list() {
  return init_list({"reach the hallway", "find the stairs", "touch the crate"});
}

}  // namespace

TEST_CASE("init_list starts all-pending at revision zero") {
  const TodoList list = sample_list();
  REQUIRE(list.items.size() == 3);
  CHECK(list.revision == 0);
  for (const TodoItem& item : list.items) {
    CHECK(item.status == TodoStatus::pending);
    CHECK(item.result.empty());
  }
  CHECK_THROWS_AS(init_list({}), Error);
}

TEST_CASE("update completes an item and records the result") {
  std::vector<std::string> warnings;
  const TodoList out =
      apply(sample_list(),
            {TodoUpdateOp::update_op(2, TodoStatus::completed, "seen")},
            warnings);
  CHECK(warnings.empty());
  CHECK(out.revision == 1);
  CHECK(out.items[1].status == TodoStatus::completed);
  CHECK(out.items[1].result == "seen");
  CHECK(out.items[0].status == TodoStatus::pending);
}

TEST_CASE("completion with an empty result is rolled back with a warning") {
  std::vector<std::string> warnings;
  const TodoList out = apply(
      sample_list(), {TodoUpdateOp::update_op(1, TodoStatus::completed, "")},
      warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("rolled back") != std::string::npos);
  CHECK(out.items[0].status == TodoStatus::pending);
  CHECK(out.revision == 1);  // the batch still counts
}

TEST_CASE("out-of-range indices skip the op and warn") {
  std::vector<std::string> warnings;
  const TodoList out =
      apply(sample_list(),
            {TodoUpdateOp::update_op(9, TodoStatus::completed, "x"),
             TodoUpdateOp::rewrite_op(0, "nope"),
             TodoUpdateOp::remove_op(-3)},
            warnings);
  CHECK(warnings.size() == 3);
  CHECK(out.items == sample_list().items);
  CHECK(out.revision == 1);
}

TEST_CASE("batch indices address the list as it was before the batch") {
  std::vector<std::string> warnings;
  // Remove the first item, then update "find the stairs" by its pre-batch
  // index 2 even though it has shifted to the front.
  const TodoList out =
      apply(sample_list(),
            {TodoUpdateOp::remove_op(1),
             TodoUpdateOp::update_op(2, TodoStatus::completed, "up")},
            warnings);
  CHECK(warnings.empty());
  REQUIRE(out.items.size() == 2);
  CHECK(out.items[0].content == "find the stairs");
  CHECK(out.items[0].status == TodoStatus::completed);
}

TEST_CASE("ops addressing an item removed earlier in the batch warn") {
  std::vector<std::string> warnings;
  const TodoList out =
      apply(sample_list(),
            {TodoUpdateOp::remove_op(2),
             TodoUpdateOp::update_op(2, TodoStatus::completed, "late")},
            warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("out of range") != std::string::npos);
  CHECK(out.items.size() == 2);
}

TEST_CASE("add without an index appends a pending item") {
  std::vector<std::string> warnings;
  const TodoList out =
      apply(sample_list(), {TodoUpdateOp::add_op("charge the battery")},
            warnings);
  REQUIRE(out.items.size() == 4);
  CHECK(out.items.back().content == "charge the battery");
  CHECK(out.items.back().status == TodoStatus::pending);
}

TEST_CASE("add with an index inserts before that pre-batch position") {
  std::vector<std::string> warnings;
  const TodoList out =
      apply(sample_list(), {TodoUpdateOp::add_op("open the door", 2)},
            warnings);
  REQUIRE(out.items.size() == 4);
  CHECK(out.items[1].content == "open the door");
  CHECK(out.items[2].content == "find the stairs");
}

TEST_CASE("items added in a batch cannot be addressed by that batch") {
  std::vector<std::string> warnings;
  // The appended item does not acquire pre-batch index 4.
  const TodoList out =
      apply(sample_list(),
            {TodoUpdateOp::add_op("extra"),
             TodoUpdateOp::update_op(4, TodoStatus::completed, "x")},
            warnings);
  CHECK(warnings.size() == 1);
  CHECK(out.items[3].status == TodoStatus::pending);
}

TEST_CASE("removing a completed item succeeds with a warning") {
  std::vector<std::string> warnings;
  TodoList list = sample_list();
  list = apply(list, {TodoUpdateOp::update_op(3, TodoStatus::completed, "ok")},
               warnings);
  CHECK(warnings.empty());
  list = apply(list, {TodoUpdateOp::remove_op(3)}, warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("completed") != std::string::npos);
  CHECK(list.items.size() == 2);
  CHECK(list.revision == 2);
}

TEST_CASE("revision advances exactly once per batch, even an empty one") {
  std::vector<std::string> warnings;
  TodoList list = sample_list();
  list = apply(list, {}, warnings);
  CHECK(list.revision == 1);
  list = apply(list,
               {TodoUpdateOp::update_op(1, TodoStatus::completed, "a"),
                TodoUpdateOp::rewrite_op(2, "b"),
                TodoUpdateOp::remove_op(3)},
               warnings);
  CHECK(list.revision == 2);
}

TEST_CASE("render_text is deterministic and separates distinct lists") {
  TodoList list = sample_list();
  CHECK(render_text(list) == render_text(list));
  CHECK(render_text(list).find("revision 0, 3 items") != std::string::npos);
  CHECK(render_text(list).find("2. [ ] find the stairs") != std::string::npos);

  std::vector<std::string> warnings;
  std::set<std::string> seen;
  seen.insert(render_text(list));
  const std::vector<std::vector<TodoUpdateOp>> batches = {
      {TodoUpdateOp::update_op(1, TodoStatus::completed, "done")},
      {TodoUpdateOp::rewrite_op(2, "find the lift")},
      {TodoUpdateOp::remove_op(3)},
      {TodoUpdateOp::add_op("report back")},
  };
  for (const auto& batch : batches) {
    const TodoList next = apply(list, batch, warnings);
    const std::string text = render_text(next);
    CHECK(seen.insert(text).second);  // each edit changes the rendering
    CHECK(text.find("revision 1") != std::string::npos);
  }
  // The completion glyph and result line show up.
  const TodoList done = apply(list, batches[0], warnings);
  CHECK(render_text(done).find("1. [x] reach the hallway | result: done") !=
        std::string::npos);
}

TEST_CASE("apply matches the reference interpreter on 500 random batches") {
  std::mt19937 rng(20240817);
  const std::vector<std::string> words = {"a", "b", "c", "d", "go", "stop"};
  std::uniform_int_distribution<int> kind_d(0, 3);
  std::uniform_int_distribution<int> word_d(0,
                                            static_cast<int>(words.size()) - 1);
  std::uniform_int_distribution<int> len_d(0, 8);
  std::uniform_int_distribution<int> coin(0, 1);

  TodoList list = init_list({"start"});
  for (int batch_no = 0; batch_no < 500; ++batch_no) {
    const int n = static_cast<int>(list.items.size());
    std::uniform_int_distribution<int> idx_d(-1, n + 2);
    std::vector<TodoUpdateOp> ops;
    const int len = len_d(rng);
    for (int k = 0; k < len; ++k) {
      switch (kind_d(rng)) {
        case 0:
          ops.push_back(TodoUpdateOp::update_op(
              idx_d(rng),
              coin(rng) ? TodoStatus::completed : TodoStatus::pending,
              coin(rng) ? words[word_d(rng)] : std::string()));
          break;
        case 1:
          ops.push_back(TodoUpdateOp::rewrite_op(idx_d(rng),
                                                 words[word_d(rng)]));
          break;
        case 2:
          ops.push_back(coin(rng)
                            ? TodoUpdateOp::add_op(words[word_d(rng)])
                            : TodoUpdateOp::add_op(words[word_d(rng)],
                                                   idx_d(rng)));
          break;
        default:
          ops.push_back(TodoUpdateOp::remove_op(idx_d(rng)));
          break;
      }
    }
    std::vector<std::string> warnings;
    int expected_warnings = 0;
    const TodoList got = apply(list, ops, warnings);
    const TodoList want = reference_apply(list, ops, &expected_warnings);
    REQUIRE(got == want);
    CHECK(static_cast<int>(warnings.size()) == expected_warnings);
    CHECK(got.revision == list.revision + 1);
    list = got;
    if (list.items.empty()) list = init_list({"restart"});
  }
}

TEST_CASE("apply matches the reference on every short batch over small lists") {
  for (int n = 0; n <= 4; ++n) {
    // Lists with a mix of statuses: item i completed when i is odd.
    TodoList list;
    for (int i = 0; i < n; ++i) {
      TodoItem item;
      item.content = "item" + std::to_string(i + 1);
      if (i % 2 == 1) {
        item.status = TodoStatus::completed;
        item.result = "r" + std::to_string(i + 1);
      }
      list.items.push_back(item);
    }

    // Full op vocabulary over indices 0..n+1 (including both out-of-range
    // sides) plus the append form of add.
    std::vector<TodoUpdateOp> vocab;
    for (int i = 0; i <= n + 1; ++i) {
      vocab.push_back(TodoUpdateOp::update_op(i, TodoStatus::completed, "ok"));
      vocab.push_back(TodoUpdateOp::update_op(i, TodoStatus::completed, ""));
      vocab.push_back(TodoUpdateOp::update_op(i, TodoStatus::pending, ""));
      vocab.push_back(TodoUpdateOp::rewrite_op(i, "new"));
      vocab.push_back(TodoUpdateOp::remove_op(i));
      vocab.push_back(TodoUpdateOp::add_op("ins", i));
    }
    vocab.push_back(TodoUpdateOp::add_op("app"));

    for (std::size_t a = 0; a < vocab.size(); ++a) {
      for (std::size_t b = 0; b < vocab.size(); ++b) {
        std::vector<std::string> warnings;
        int expected_warnings = 0;
        const std::vector<TodoUpdateOp> ops = {vocab[a], vocab[b]};
        const TodoList got = apply(list, ops, warnings);
        const TodoList want = reference_apply(list, ops, &expected_warnings);
        if (got != want ||
            static_cast<int>(warnings.size()) != expected_warnings) {
          CAPTURE(n);
          CAPTURE(a);
          CAPTURE(b);
          REQUIRE(got == want);
          REQUIRE(static_cast<int>(warnings.size()) == expected_warnings);
        }
      }
    }
  }
}
