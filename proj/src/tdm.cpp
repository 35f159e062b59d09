#include "unav/tdm.hpp"

#include <sstream>

namespace unav {

const char* to_string(TodoStatus s) {
  return s == TodoStatus::completed ? "completed" : "pending";
}

TodoUpdateOp TodoUpdateOp::update_op(int i, TodoStatus s, std::string result) {
  TodoUpdateOp op;
  op.kind = Kind::update;
  op.index = i;
  op.status = s;
  op.result = std::move(result);
  return op;
}

TodoUpdateOp TodoUpdateOp::rewrite_op(int i, std::string content) {
  TodoUpdateOp op;
  op.kind = Kind::rewrite;
  op.index = i;
  op.content = std::move(content);
  return op;
}

TodoUpdateOp TodoUpdateOp::add_op(std::string content,
                                  std::optional<int> index) {
  TodoUpdateOp op;
  op.kind = Kind::add;
  op.content = std::move(content);
  op.has_index = index.has_value();
  op.index = index.value_or(0);
  return op;
}

TodoUpdateOp TodoUpdateOp::remove_op(int i) {
  TodoUpdateOp op;
  op.kind = Kind::remove;
  op.index = i;
  return op;
}

TodoList init_list(const std::vector<std::string>& subgoal_texts) {
  if (subgoal_texts.empty()) {
    throw Error(ErrorCode::EmptyPlan, "checklist needs at least one item");
  }
  TodoList list;
  for (const std::string& text : subgoal_texts) {
    list.items.push_back(TodoItem{text, TodoStatus::pending, ""});
  }
  return list;
}

namespace {

struct Slot {
  int orig_index;  // 1-based pre-batch position, -1 for items added in-batch
  TodoItem item;
};

// Position of the element that held 1-based pre-batch index i, or -1.
int find_slot(const std::vector<Slot>& slots, int i) {
  if (i < 1) return -1;  // never match the in-batch sentinel
  for (std::size_t p = 0; p < slots.size(); ++p) {
    if (slots[p].orig_index == i) return static_cast<int>(p);
  }
  return -1;
}

}  // namespace

TodoList apply(const TodoList& list, const std::vector<TodoUpdateOp>& ops,
               std::vector<std::string>& warnings) {
  std::vector<Slot> slots;
  slots.reserve(list.items.size());
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    slots.push_back(Slot{static_cast<int>(i) + 1, list.items[i]});
  }

  for (std::size_t oi = 0; oi < ops.size(); ++oi) {
    const TodoUpdateOp& op = ops[oi];
    const std::string tag = "op " + std::to_string(oi + 1);
    switch (op.kind) {
      case TodoUpdateOp::Kind::update: {
        const int p = find_slot(slots, op.index);
        if (p < 0) {
          warnings.push_back(tag + ": update index " +
                             std::to_string(op.index) + " out of range");
          break;
        }
        if (op.status == TodoStatus::completed && op.result.empty()) {
          warnings.push_back(tag + ": completion of item " +
                             std::to_string(op.index) +
                             " rolled back (empty result)");
          break;
        }
        slots[p].item.status = op.status;
        slots[p].item.result = op.result;
        break;
      }
      case TodoUpdateOp::Kind::rewrite: {
        const int p = find_slot(slots, op.index);
        if (p < 0) {
          warnings.push_back(tag + ": rewrite index " +
                             std::to_string(op.index) + " out of range");
          break;
        }
        slots[p].item.content = op.content;
        break;
      }
      case TodoUpdateOp::Kind::add: {
        Slot added{-1, TodoItem{op.content, TodoStatus::pending, ""}};
        if (!op.has_index) {
          slots.push_back(std::move(added));
          break;
        }
        // Insert before the surviving item whose pre-batch position is the
        // first one >= the requested index; append when none remains.
        std::size_t at = slots.size();
        for (std::size_t p = 0; p < slots.size(); ++p) {
          if (slots[p].orig_index >= op.index && slots[p].orig_index != -1) {
            at = p;
            break;
          }
        }
        slots.insert(slots.begin() + at, std::move(added));
        break;
      }
      case TodoUpdateOp::Kind::remove: {
        const int p = find_slot(slots, op.index);
        if (p < 0) {
          warnings.push_back(tag + ": remove index " +
                             std::to_string(op.index) + " out of range");
          break;
        }
        if (slots[p].item.status == TodoStatus::completed) {
          warnings.push_back(tag + ": removing completed item " +
                             std::to_string(op.index));
        }
        slots.erase(slots.begin() + p);
        break;
      }
    }
  }

  TodoList out;
  out.revision = list.revision + 1;
  out.items.reserve(slots.size());
  for (Slot& s : slots) out.items.push_back(std::move(s.item));
  return out;
}

std::string render_text(const TodoList& list) {
  std::ostringstream os;
  os << "TODO list (revision " << list.revision << ", "
     << list.items.size() << " items)\n";
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    const TodoItem& item = list.items[i];
    os << (i + 1) << ". ["
       << (item.status == TodoStatus::completed ? 'x' : ' ') << "] "
       << item.content;
    if (!item.result.empty()) os << " | result: " << item.result;
    os << "\n";
  }
  return os.str();
}

}  // namespace unav
