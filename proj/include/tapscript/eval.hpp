#pragma once

// Tree-walking evaluator: environments, the evaluation context, strict
// evaluation of ExprNodes, closures, and the core builtin set.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "syntax.hpp"
#include "values.hpp"

namespace tapscript {

/// Runtime error, optionally located at the offending node.
class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& message) : std::runtime_error(message) {}
  EvalError(const std::string& message, SourceSpan span)
      : std::runtime_error(message), span_(std::move(span)) {}

  const std::optional<SourceSpan>& span() const { return span_; }
  void set_span(SourceSpan span) { span_ = std::move(span); }

 private:
  std::optional<SourceSpan> span_;
};

// ---- environments -------------------------------------------------------

/// Name -> Value bindings with an optional parent. Lookups walk the parent
/// chain; assignment is always local.
class Environment {
 public:
  explicit Environment(EnvPtr parent = nullptr) : parent_(std::move(parent)) {}

  const EnvPtr& parent() const { return parent_; }
  const std::map<std::string, Value, std::less<>>& bindings() const { return bindings_; }

  const Value* lookup(std::string_view name) const {
    for (const Environment* e = this; e; e = e->parent_.get()) {
      auto it = e->bindings_.find(name);
      if (it != e->bindings_.end()) return &it->second;
    }
    return nullptr;
  }

  /// Like lookup, but skips bindings that are not functions.
  const Value* lookup_function(std::string_view name) const {
    for (const Environment* e = this; e; e = e->parent_.get()) {
      auto it = e->bindings_.find(name);
      if (it != e->bindings_.end() && it->second.is_function()) return &it->second;
    }
    return nullptr;
  }

  const Value* get_local(std::string_view name) const {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
  }

  bool has_local(std::string_view name) const { return bindings_.find(name) != bindings_.end(); }

  void set(std::string_view name, Value value) {
    auto it = bindings_.find(name);
    if (it != bindings_.end())
      it->second = std::move(value);
    else
      bindings_.emplace(std::string(name), std::move(value));
  }

  bool erase(std::string_view name) {
    auto it = bindings_.find(name);
    if (it == bindings_.end()) return false;
    bindings_.erase(it);
    return true;
  }

 private:
  EnvPtr parent_;
  std::map<std::string, Value, std::less<>> bindings_;
};

inline EnvPtr new_environment(EnvPtr parent = nullptr) {
  return std::make_shared<Environment>(std::move(parent));
}

// ---- clocks -------------------------------------------------------------

class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds on a monotonic scale.
  virtual double monotonic_seconds() = 0;
  /// Wall-clock time as "YYYY-MM-DD HH:MM:SS".
  virtual std::string timestamp() = 0;
};

namespace detail {

inline std::string format_time(std::time_t t, bool utc) {
  std::tm parts{};
  if (utc)
    gmtime_r(&t, &parts);
  else
    localtime_r(&t, &parts);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", &parts);
  return buf;
}

}  // namespace detail

class SystemClock : public Clock {
 public:
  double monotonic_seconds() override {
    using namespace std::chrono;
    return duration<double>(steady_clock::now() - origin_).count();
  }
  std::string timestamp() override {
    return detail::format_time(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()),
                               false);
  }

 private:
  std::chrono::steady_clock::time_point origin_ = std::chrono::steady_clock::now();
};

/// Deterministic clock. Every reading advances its channel by `step`
/// seconds; monotonic and wall readings are counted separately so one
/// consumer cannot perturb another. Wall time is rendered in UTC.
class FixedClock : public Clock {
 public:
  explicit FixedClock(std::time_t start = default_start(), double step = 0.0)
      : start_(start), step_(step) {}

  /// 2019-08-09 11:29:06 UTC.
  static std::time_t default_start() {
    std::tm parts{};
    parts.tm_year = 2019 - 1900;
    parts.tm_mon = 7;
    parts.tm_mday = 9;
    parts.tm_hour = 11;
    parts.tm_min = 29;
    parts.tm_sec = 6;
    return timegm(&parts);
  }

  double monotonic_seconds() override {
    std::lock_guard lock(mutex_);
    return step_ * static_cast<double>(monotonic_reads_++);
  }

  std::string timestamp() override {
    std::lock_guard lock(mutex_);
    auto offset = static_cast<std::time_t>(std::floor(step_ * static_cast<double>(wall_reads_++)));
    return detail::format_time(start_ + offset, true);
  }

 private:
  std::mutex mutex_;
  std::time_t start_;
  double step_;
  long monotonic_reads_ = 0;
  long wall_reads_ = 0;
};

/// Paths claimed by log dumps; a second claim on the same stem gets a
/// numbered suffix instead of overwriting the first file.
class LogPathRegistry {
 public:
  std::filesystem::path claim(const std::filesystem::path& dir, const std::string& stem) {
    std::lock_guard lock(mutex_);
    for (int n = 1;; ++n) {
      std::string name = n == 1 ? stem + ".csv" : fmt::format("{}_{}.csv", stem, n);
      std::filesystem::path candidate = (dir / name).lexically_normal();
      if (claimed_.insert(candidate.string()).second) return candidate;
    }
  }

 private:
  std::mutex mutex_;
  std::set<std::string> claimed_;
};

struct EvalContext {
  std::shared_ptr<Clock> clock = std::make_shared<SystemClock>();
  std::ostream* out = nullptr;       // print() and auto-printed results
  std::ostream* messages = nullptr;  // message lines (standard error in the CLI)
  EnvPtr builtins;
  std::filesystem::path working_dir = ".";
  std::filesystem::path log_dir = ".";
  std::shared_ptr<LogPathRegistry> log_paths = std::make_shared<LogPathRegistry>();

  void message(std::string_view text) const {
    if (messages) *messages << text << '\n';
  }
  void print(std::string_view text) const {
    if (out) *out << text << '\n';
  }
};

// ---- calls --------------------------------------------------------------

struct CallArgs {
  std::vector<Value> positional;
  std::vector<std::pair<std::string, Value>> named;
  /// Syntax of each positional argument when the call came from source;
  /// empty (or null entries) otherwise.
  std::vector<const ExprNode*> positional_syntax;
  const SourceSpan* call_span = nullptr;
  /// The call expression itself, when called from source.
  const ExprNode* call_node = nullptr;

  std::size_t size() const { return positional.size() + named.size(); }
  const ExprNode* syntax(std::size_t i) const {
    return i < positional_syntax.size() ? positional_syntax[i] : nullptr;
  }
  const Value* named_arg(std::string_view name) const {
    for (const auto& [k, v] : named)
      if (k == name) return &v;
    return nullptr;
  }
};

class Evaluator;
Value pipe_apply(const Value& lhs, const Value& rhs_fn, std::string_view rhs_text, Evaluator& ev,
                 const EnvPtr& env);

namespace detail {

enum class VecType { Logical = 0, Numeric = 1, String = 2 };

inline VecType vec_type(const Value& v) {
  if (v.logical()) return VecType::Logical;
  if (v.numeric()) return VecType::Numeric;
  return VecType::String;
}

inline NumericVector as_numeric(const Value& v, std::string_view what) {
  if (auto n = v.numeric()) return *n;
  if (auto l = v.logical()) {
    NumericVector out;
    out.reserve(l->size());
    for (bool b : *l) out.push_back(b ? 1.0 : 0.0);
    return out;
  }
  if (v.is_null()) return {};
  throw EvalError(fmt::format("non-numeric argument to {}", what));
}

inline LogicalVector as_logical(const Value& v, std::string_view what) {
  if (auto l = v.logical()) return *l;
  if (auto n = v.numeric()) {
    LogicalVector out;
    out.reserve(n->size());
    for (double x : *n) {
      if (std::isnan(x)) throw EvalError(fmt::format("NaN where logical is needed in {}", what));
      out.push_back(x != 0.0);
    }
    return out;
  }
  if (v.is_null()) return {};
  throw EvalError(fmt::format("invalid argument type ({}) to {}", type_name(v), what));
}

inline StringVector as_strings(const Value& v) {
  if (auto s = v.strings()) return *s;
  StringVector out;
  if (auto n = v.numeric())
    for (double x : *n) out.push_back(number_to_string(x));
  if (auto l = v.logical())
    for (bool b : *l) out.emplace_back(b ? "TRUE" : "FALSE");
  return out;
}

inline Value as_type(const Value& v, VecType type) {
  switch (type) {
    case VecType::Logical: return Value(as_logical(v, "coercion"));
    case VecType::Numeric: return Value(as_numeric(v, "coercion"));
    case VecType::String: return Value(as_strings(v));
  }
  return v;
}

/// Concatenation with logical -> numeric -> string promotion; NULLs vanish.
inline Value concat(const std::vector<Value>& parts) {
  VecType type = VecType::Logical;
  bool any = false;
  for (const auto& p : parts) {
    if (p.is_null()) continue;
    if (!p.is_vector()) throw EvalError(fmt::format("cannot combine a {} into a vector", type_name(p)));
    type = std::max(type, vec_type(p));
    any = true;
  }
  if (!any) return Value();
  switch (type) {
    case VecType::Logical: {
      LogicalVector out;
      for (const auto& p : parts)
        if (auto l = p.logical()) out.insert(out.end(), l->begin(), l->end());
      return Value(std::move(out));
    }
    case VecType::Numeric: {
      NumericVector out;
      for (const auto& p : parts) {
        auto n = as_numeric(p, "c");
        out.insert(out.end(), n.begin(), n.end());
      }
      return Value(std::move(out));
    }
    case VecType::String: {
      StringVector out;
      for (const auto& p : parts) {
        auto s = as_strings(p);
        out.insert(out.end(), s.begin(), s.end());
      }
      return Value(std::move(out));
    }
  }
  return Value();
}

/// Result length for elementwise operations: a length-1 operand broadcasts.
inline std::size_t broadcast_length(std::size_t a, std::size_t b) {
  if (a == 0 || b == 0) return 0;
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw EvalError(fmt::format("length mismatch: {} vs {}", a, b));
}

inline Value arithmetic(const std::string& op, const Value& a, const Value& b) {
  auto x = as_numeric(a, fmt::format("binary operator '{}'", op));
  auto y = as_numeric(b, fmt::format("binary operator '{}'", op));
  std::size_t n = broadcast_length(x.size(), y.size());
  NumericVector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double l = x[x.size() == 1 ? 0 : i], r = y[y.size() == 1 ? 0 : i];
    switch (op[0]) {
      case '+': out[i] = l + r; break;
      case '-': out[i] = l - r; break;
      case '*': out[i] = l * r; break;
      case '/': out[i] = l / r; break;
      case '^': out[i] = std::pow(l, r); break;
    }
  }
  return Value(std::move(out));
}

template <class T>
bool compare_with(const std::string& op, const T& l, const T& r) {
  if (op == "<") return l < r;
  if (op == ">") return l > r;
  if (op == "<=") return l <= r;
  if (op == ">=") return l >= r;
  if (op == "==") return l == r;
  return l != r;
}

inline Value comparison(const std::string& op, const Value& a, const Value& b) {
  if (!a.is_vector() && !a.is_null()) throw EvalError(fmt::format("cannot compare a {}", type_name(a)));
  if (!b.is_vector() && !b.is_null()) throw EvalError(fmt::format("cannot compare a {}", type_name(b)));
  std::size_t n = broadcast_length(a.length(), b.length());
  LogicalVector out(n);
  if (a.strings() || b.strings()) {
    auto x = as_strings(a), y = as_strings(b);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = compare_with(op, x[x.size() == 1 ? 0 : i], y[y.size() == 1 ? 0 : i]);
  } else {
    auto x = as_numeric(a, op), y = as_numeric(b, op);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = compare_with(op, x[x.size() == 1 ? 0 : i], y[y.size() == 1 ? 0 : i]);
  }
  return Value(std::move(out));
}

inline Value logical_op(const std::string& op, const Value& a, const Value& b) {
  auto x = as_logical(a, op), y = as_logical(b, op);
  std::size_t n = broadcast_length(x.size(), y.size());
  LogicalVector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool l = x[x.size() == 1 ? 0 : i], r = y[y.size() == 1 ? 0 : i];
    out[i] = op == "&" ? (l && r) : (l || r);
  }
  return Value(std::move(out));
}

/// 0-based positions selected by an index vector over a vector of length n.
inline std::vector<std::size_t> resolve_index(const Value& index, std::size_t n) {
  std::vector<std::size_t> out;
  if (auto mask = index.logical()) {
    if (mask->size() != n && mask->size() != 1)
      throw EvalError(fmt::format("logical index of length {} for a vector of length {}", mask->size(), n));
    for (std::size_t i = 0; i < n; ++i)
      if ((*mask)[mask->size() == 1 ? 0 : i]) out.push_back(i);
    return out;
  }
  if (auto pos = index.numeric()) {
    for (double p : *pos) {
      if (std::isnan(p)) throw EvalError("NaN index");
      if (p < 0) throw EvalError("negative indices are not supported");
      auto i = static_cast<std::size_t>(p);
      if (i < 1 || i > n) throw EvalError(fmt::format("index {} out of bounds [1, {}]", format_number(p), n));
      out.push_back(i - 1);
    }
    return out;
  }
  throw EvalError(fmt::format("invalid index type '{}'", type_name(index)));
}

inline Value subset(const Value& target, const Value& index) {
  if (!target.is_vector()) throw EvalError(fmt::format("object of type '{}' is not subsettable", type_name(target)));
  auto positions = resolve_index(index, target.length());
  return std::visit(
      [&](const auto& v) -> Value {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, NumericVector> || std::is_same_v<T, LogicalVector> ||
                      std::is_same_v<T, StringVector>) {
          T out;
          for (auto p : positions) out.push_back(v[p]);
          return Value(std::move(out));
        } else {
          return Value();
        }
      },
      target.payload());
}

inline Value assign_subset(const Value& target, const Value& index, const Value& value) {
  if (!target.is_vector()) throw EvalError(fmt::format("cannot index-assign into a {}", type_name(target)));
  if (!value.is_vector()) throw EvalError(fmt::format("cannot assign a {} into a vector", type_name(value)));
  auto positions = resolve_index(index, target.length());
  if (value.length() != 1 && value.length() != positions.size())
    throw EvalError(fmt::format("replacement has length {} for {} selected elements", value.length(),
                                positions.size()));
  if (positions.empty()) return target;
  VecType type = std::max(vec_type(target), vec_type(value));
  Value out = as_type(target, type);
  Value src = as_type(value, type);
  auto write = [&](auto& dst, const auto& from) {
    for (std::size_t k = 0; k < positions.size(); ++k) dst[positions[k]] = from[from.size() == 1 ? 0 : k];
  };
  switch (type) {
    case VecType::Logical: {
      auto v = *out.logical();
      write(v, *src.logical());
      out = Value(std::move(v));
      break;
    }
    case VecType::Numeric: {
      auto v = *out.numeric();
      write(v, *src.numeric());
      out = Value(std::move(v));
      break;
    }
    case VecType::String: {
      auto v = *out.strings();
      write(v, *src.strings());
      out = Value(std::move(v));
      break;
    }
  }
  out.set_attrs(target.attrs());
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvalError(fmt::format("cannot open file '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

// ---- evaluator ----------------------------------------------------------

class Evaluator {
 public:
  explicit Evaluator(const EvalContext& ctx) : ctx_(ctx) {}

  const EvalContext& context() const { return ctx_; }

  /// Whether the last evaluated value should be auto-printed.
  bool visible() const { return visible_; }
  void set_invisible() { visible_ = false; }

  Value eval(const ExprNode& node, const EnvPtr& env) {
    if (++depth_ > kMaxDepth) {
      depth_ = 0;
      throw EvalError("evaluation nested too deeply", node.span);
    }
    struct Depth {
      int& d;
      ~Depth() { --d; }
    } guard{depth_};
    try {
      visible_ = true;
      return eval_node(node, env);
    } catch (EvalError& e) {
      if (!e.span()) e.set_span(node.span);
      throw;
    }
  }

  /// Applies a closure or builtin to already-evaluated arguments.
  Value call(const Value& fn, CallArgs args, const EnvPtr& env) {
    if (const Closure* c = fn.closure()) return call_closure(*c, std::move(args));
    if (const Builtin* b = fn.builtin()) {
      if (!b->eager) throw EvalError(fmt::format("{}() cannot be called indirectly", b->name));
      visible_ = true;
      return b->eager(*this, args, env);
    }
    throw EvalError(fmt::format("attempt to apply non-function ({})", type_name(fn)));
  }

  Value call(const Value& fn, std::vector<Value> positional, const EnvPtr& env) {
    CallArgs args;
    args.positional = std::move(positional);
    return call(fn, std::move(args), env);
  }

 private:
  static constexpr int kMaxDepth = 2000;

  Value lookup(const std::string& name, const EnvPtr& env) const {
    if (const Value* v = env->lookup(name)) return *v;
    throw EvalError(fmt::format("object '{}' not found", name));
  }

  Value call_closure(const Closure& c, CallArgs args) {
    if (args.positional.size() > c.params.size())
      throw EvalError(fmt::format("function takes {} argument(s) but {} were given", c.params.size(),
                                  args.size()));
    auto frame = new_environment(c.env);
    std::vector<bool> bound(c.params.size(), false);
    for (std::size_t i = 0; i < args.positional.size(); ++i) {
      frame->set(c.params[i], std::move(args.positional[i]));
      bound[i] = true;
    }
    for (auto& [name, value] : args.named) {
      auto it = std::find(c.params.begin(), c.params.end(), name);
      if (it == c.params.end()) throw EvalError(fmt::format("unused argument ({} = ...)", name));
      auto i = static_cast<std::size_t>(it - c.params.begin());
      if (bound[i]) throw EvalError(fmt::format("argument '{}' matched more than once", name));
      frame->set(name, std::move(value));
      bound[i] = true;
    }
    for (std::size_t i = 0; i < bound.size(); ++i)
      if (!bound[i]) throw EvalError(fmt::format("argument '{}' is missing", c.params[i]));
    return eval(*c.body, frame);
  }

  Value eval_node(const ExprNode& n, const EnvPtr& env) {
    switch (n.kind) {
      case NodeKind::NumberLit: return number(n.number);
      case NodeKind::StringLit: return string(n.text);
      case NodeKind::BoolLit: return logical(n.flag);
      case NodeKind::NullLit: return Value();
      case NodeKind::Ident: return lookup(n.text, env);

      case NodeKind::Assign: {
        Value v = eval(*n.children[0], env);
        env->set(n.text, std::move(v));
        visible_ = false;
        return Value();
      }
      case NodeKind::IndexAssign: {
        Value target = lookup(n.text, env);
        Value index = eval(*n.children[0], env);
        Value v = eval(*n.children[1], env);
        env->set(n.text, detail::assign_subset(target, index, v));
        visible_ = false;
        return Value();
      }
      case NodeKind::FieldAssign: {
        Value target = lookup(n.text, env);
        Value v = eval(*n.children[0], env);
        Table* t = target.mutable_table();
        if (!t) throw EvalError(fmt::format("cannot assign field '{}' of a {}", n.member, type_name(target)));
        if (v.is_null()) {
          t->remove_column(n.member);
        } else {
          if (!v.is_vector())
            throw EvalError(fmt::format("table column must be a vector, not a {}", type_name(v)));
          Value column = core(v);
          column.clear_attrs();
          if (!t->columns.empty() && column.length() != t->rows()) {
            if (column.length() != 1)
              throw EvalError(fmt::format("replacement has {} rows, table has {}", column.length(), t->rows()));
            column = detail::concat(std::vector<Value>(t->rows(), column));
          }
          t->set_column(n.member, std::move(column));
        }
        env->set(n.text, std::move(target));
        visible_ = false;
        return Value();
      }

      case NodeKind::Binary: {
        Value a = eval(*n.children[0], env);
        Value b = eval(*n.children[1], env);
        visible_ = true;
        const std::string& op = n.text;
        if (op == "+" || op == "-" || op == "*" || op == "/" || op == "^") return detail::arithmetic(op, a, b);
        if (op == "&" || op == "|") return detail::logical_op(op, a, b);
        return detail::comparison(op, a, b);
      }
      case NodeKind::Unary: {
        Value a = eval(*n.children[0], env);
        visible_ = true;
        Value out;
        if (n.text == "-") {
          auto x = detail::as_numeric(a, "unary minus");
          for (double& v : x) v = -v;
          out = Value(std::move(x));
        } else {
          auto x = detail::as_logical(a, "'!'");
          x.flip();
          out = Value(std::move(x));
        }
        out.set_attrs(a.attrs());
        return out;
      }
      case NodeKind::Index: {
        Value target = eval(*n.children[0], env);
        Value index = eval(*n.children[1], env);
        visible_ = true;
        return detail::subset(target, index);
      }
      case NodeKind::Field: {
        Value target = eval(*n.children[0], env);
        visible_ = true;
        if (const Table* t = target.table()) {
          if (const Value* c = t->column(n.member)) return *c;
          return Value();
        }
        if (const Object* o = target.object()) {
          if (const Value* f = o->field(n.member)) return *f;
          throw EvalError(fmt::format("'{}' has no field '{}'", o->name, n.member));
        }
        throw EvalError(fmt::format("'$' is invalid for a {}", type_name(target)));
      }
      case NodeKind::Call: return eval_call(n, env);
      case NodeKind::Block: {
        Value last;
        for (const auto& stmt : n.children) last = eval(*stmt, env);
        return last;
      }
      case NodeKind::If: {
        Value cond = eval(*n.children[0], env);
        if (cond.length() != 1 || !(cond.logical() || cond.numeric()))
          throw EvalError(cond.length() == 0 ? "argument is of length zero"
                                             : fmt::format("condition has length {}", cond.length()),
                          n.children[0]->span);
        bool truth = detail::as_logical(cond, "if")[0];
        if (truth) return eval(*n.children[1], env);
        if (n.children.size() > 2) return eval(*n.children[2], env);
        visible_ = false;
        return Value();
      }
      case NodeKind::FnDef: {
        auto c = std::make_shared<Closure>();
        c->params = n.names;
        c->body = n.children[0];
        c->env = env;
        c->text = n.text;
        return Value(std::shared_ptr<const Closure>(std::move(c)));
      }
      case NodeKind::Pipe: {
        Value lhs = eval(*n.children[0], env);
        Value rhs = eval(*n.children[1], env);
        Value out = pipe_apply(lhs, rhs, n.text, *this, env);
        visible_ = true;
        return out;
      }
      case NodeKind::VectorCtor: {
        std::vector<Value> parts;
        for (const auto& c : n.children) parts.push_back(eval(*c, env));
        visible_ = true;
        return detail::concat(parts);
      }
    }
    throw EvalError("unknown node kind");
  }

  Value eval_call(const ExprNode& n, const EnvPtr& env) {
    const ExprNode& callee = *n.children[0];
    Value fn;
    if (callee.kind == NodeKind::Ident) {
      const Value* found = env->lookup_function(callee.text);
      if (!found) throw EvalError(fmt::format("could not find function \"{}\"", callee.text), callee.span);
      fn = *found;
    } else {
      fn = eval(callee, env);
    }
    if (!fn.is_function())
      throw EvalError(fmt::format("attempt to apply non-function ({})", type_name(fn)), callee.span);

    if (const Builtin* b = fn.builtin(); b && b->lazy) {
      visible_ = true;
      return b->lazy(*this, n, env);
    }

    CallArgs args;
    args.call_span = &n.span;
    args.call_node = &n;
    for (std::size_t i = 1; i < n.children.size(); ++i) {
      Value v = eval(*n.children[i], env);
      const std::string& name = n.names[i - 1];
      if (name.empty()) {
        args.positional.push_back(std::move(v));
        args.positional_syntax.push_back(n.children[i].get());
      } else {
        args.named.emplace_back(name, std::move(v));
      }
    }
    return call(fn, std::move(args), env);
  }

  const EvalContext& ctx_;
  bool visible_ = true;
  int depth_ = 0;
};

/// Evaluates one node; a fresh Evaluator per call.
inline Value eval_expr(const ExprNode& node, const EnvPtr& env, const EvalContext& ctx) {
  Evaluator ev(ctx);
  return ev.eval(node, env);
}

inline Value call_function(const Value& fn, std::vector<Value> positional,
                           std::vector<std::pair<std::string, Value>> named, const EvalContext& ctx) {
  Evaluator ev(ctx);
  CallArgs args;
  args.positional = std::move(positional);
  args.named = std::move(named);
  return ev.call(fn, std::move(args), ctx.builtins ? ctx.builtins : new_environment());
}

inline void register_builtin(Environment& env, const std::string& name, Value fn) {
  if (env.has_local(name)) throw std::invalid_argument(fmt::format("'{}' is already bound", name));
  if (!fn.is_function()) throw std::invalid_argument(fmt::format("'{}' is not a function", name));
  env.set(name, std::move(fn));
}

inline void register_builtin(Environment& env, const std::string& name, Builtin::Eager behavior,
                             unsigned consumes = kConsumesNothing) {
  register_builtin(env, name, make_builtin(name, std::move(behavior), consumes));
}

// ---- datasets -----------------------------------------------------------

/// Average heights (in) and weights (lb) of 15 American women aged 30-39.
inline Table women_dataset() {
  Table t;
  NumericVector height, weight;
  for (int h = 58; h <= 72; ++h) height.push_back(h);
  weight = {115, 117, 120, 123, 126, 129, 132, 135, 139, 142, 146, 150, 154, 159, 164};
  t.set_column("height", Value(std::move(height)));
  t.set_column("weight", Value(std::move(weight)));
  return t;
}

inline std::optional<Value> dataset(std::string_view name) {
  if (name == "women") return Value(women_dataset());
  return std::nullopt;
}

// ---- core builtins ------------------------------------------------------

namespace detail {

inline void expect_arity(const CallArgs& args, std::size_t n, std::string_view fn) {
  if (args.size() != n)
    throw EvalError(fmt::format("{}() takes {} argument(s), got {}", fn, n, args.size()));
}

inline std::vector<Value> all_args(const CallArgs& args) {
  std::vector<Value> out = args.positional;
  for (const auto& [k, v] : args.named) out.push_back(v);
  return out;
}

inline NumericVector numeric_args(const CallArgs& args, std::string_view fn) {
  NumericVector out;
  for (const auto& v : all_args(args)) {
    auto n = as_numeric(v, std::string(fn) + "()");
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

inline LogicalVector logical_args(const CallArgs& args, std::string_view fn) {
  LogicalVector out;
  for (const auto& v : all_args(args)) {
    auto l = as_logical(v, std::string(fn) + "()");
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

template <class F>
Builtin::Eager unary_math(std::string name, F f) {
  return [name, f](Evaluator&, CallArgs& args, const EnvPtr&) {
    expect_arity(args, 1, name);
    const Value& x = args.positional.empty() ? args.named.front().second : args.positional.front();
    if (!x.numeric() && !x.logical())
      throw EvalError(fmt::format("non-numeric argument to mathematical function {}()", name));
    auto v = as_numeric(x, name);
    for (double& e : v) e = f(e);
    Value out(std::move(v));
    out.set_attrs(x.attrs());
    return out;
  };
}

inline std::filesystem::path resolve_path(const EvalContext& ctx, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : ctx.working_dir / path;
}

}  // namespace detail

/// Installs the language core: vector functions, math, print, data, source, with.
inline void install_core_builtins(Environment& env) {
  using detail::expect_arity;

  register_builtin(env, "c", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    return detail::concat(detail::all_args(args));
  });
  register_builtin(env, "length", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    expect_arity(args, 1, "length");
    const Value& x = args.positional.at(0);
    if (const Table* t = x.table()) return number(static_cast<double>(t->columns.size()));
    if (x.is_null()) return number(0);
    return number(static_cast<double>(x.is_vector() ? x.length() : 1));
  });
  register_builtin(env, "sum", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    auto v = detail::numeric_args(args, "sum");
    return number(std::accumulate(v.begin(), v.end(), 0.0));
  });
  register_builtin(env, "mean", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    expect_arity(args, 1, "mean");
    auto v = detail::numeric_args(args, "mean");
    if (v.empty()) return number(std::nan(""));
    return number(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
  });
  register_builtin(env, "median", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    expect_arity(args, 1, "median");
    auto v = detail::numeric_args(args, "median");
    if (v.empty()) return number(std::nan(""));
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return number(v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0);
  });
  register_builtin(env, "min", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    auto v = detail::numeric_args(args, "min");
    if (v.empty()) throw EvalError("min() of an empty vector");
    return number(*std::min_element(v.begin(), v.end()));
  });
  register_builtin(env, "max", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    auto v = detail::numeric_args(args, "max");
    if (v.empty()) throw EvalError("max() of an empty vector");
    return number(*std::max_element(v.begin(), v.end()));
  });
  register_builtin(env, "abs", detail::unary_math("abs", [](double x) { return std::fabs(x); }));
  register_builtin(env, "sqrt", detail::unary_math("sqrt", [](double x) { return std::sqrt(x); }));
  register_builtin(env, "sin", detail::unary_math("sin", [](double x) { return std::sin(x); }));
  register_builtin(env, "cos", detail::unary_math("cos", [](double x) { return std::cos(x); }));
  register_builtin(env, "exp", detail::unary_math("exp", [](double x) { return std::exp(x); }));
  register_builtin(env, "all", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    auto v = detail::logical_args(args, "all");
    return logical(std::all_of(v.begin(), v.end(), [](bool b) { return b; }));
  });
  register_builtin(env, "any", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    auto v = detail::logical_args(args, "any");
    return logical(std::any_of(v.begin(), v.end(), [](bool b) { return b; }));
  });
  register_builtin(env, "identity", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    expect_arity(args, 1, "identity");
    return args.positional.at(0);
  });
  register_builtin(env, "exists", [](Evaluator&, CallArgs& args, const EnvPtr& caller) {
    expect_arity(args, 1, "exists");
    const StringVector* name = args.positional.at(0).strings();
    if (!name || name->size() != 1) throw EvalError("exists() needs a single name");
    return logical(caller->lookup(name->front()) != nullptr);
  });
  register_builtin(env, "print", [](Evaluator& ev, CallArgs& args, const EnvPtr&) {
    expect_arity(args, 1, "print");
    const Value& x = args.positional.at(0);
    ev.context().print(format_value(x));
    ev.set_invisible();
    return x;
  });
  register_builtin(env, "paste0", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    std::vector<StringVector> parts;
    std::size_t n = 0;
    for (const auto& v : detail::all_args(args)) {
      if (!v.is_vector()) throw EvalError(fmt::format("paste0() cannot convert a {}", type_name(v)));
      if (v.length() == 0) continue;
      parts.push_back(detail::as_strings(v));
      n = std::max(n, parts.back().size());
    }
    StringVector out(n);
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& p : parts) out[i] += p[i % p.size()];
    return Value(std::move(out));
  });
  register_builtin(env, "table", [](Evaluator&, CallArgs& args, const EnvPtr&) {
    if (!args.positional.empty()) throw EvalError("table() columns must be named, e.g. table(x = c(1, 2))");
    std::size_t rows = 0;
    for (const auto& [name, v] : args.named) {
      if (!v.is_vector()) throw EvalError(fmt::format("column '{}' is not a vector", name));
      rows = std::max(rows, v.length());
    }
    Table t;
    for (const auto& [name, v] : args.named) {
      Value column = v;
      column.clear_attrs();
      if (column.length() != rows) {
        if (column.length() != 1)
          throw EvalError(fmt::format("column '{}' has {} rows, expected {}", name, column.length(), rows));
        column = detail::concat(std::vector<Value>(rows, column));
      }
      t.set_column(name, std::move(column));
    }
    return Value(std::move(t));
  });

  env.set("with", make_lazy_builtin("with", [](Evaluator& ev, const ExprNode& call, const EnvPtr& env) {
            if (call.children.size() != 3) throw EvalError("with() takes a table and an expression");
            Value data = ev.eval(*call.children[1], env);
            const Table* t = data.table();
            if (!t) throw EvalError(fmt::format("with() needs a table, got a {}", type_name(data)));
            auto scope = new_environment(env);
            for (std::size_t i = 0; i < t->names.size(); ++i) scope->set(t->names[i], t->columns[i]);
            return ev.eval(*call.children[2], scope);
          }));

  env.set("data", make_lazy_builtin("data", [](Evaluator& ev, const ExprNode& call, const EnvPtr& env) {
            StringVector loaded;
            for (std::size_t i = 1; i < call.children.size(); ++i) {
              const ExprNode& arg = *call.children[i];
              if (arg.kind != NodeKind::Ident && arg.kind != NodeKind::StringLit)
                throw EvalError("data() takes dataset names", arg.span);
              auto ds = dataset(arg.text);
              if (!ds) throw EvalError(fmt::format("data set '{}' not found", arg.text), arg.span);
              env->set(arg.text, std::move(*ds));
              loaded.push_back(arg.text);
            }
            ev.set_invisible();
            return Value(std::move(loaded));
          }));

  register_builtin(env, "source", [](Evaluator& ev, CallArgs& args, const EnvPtr& caller) {
    expect_arity(args, 1, "source");
    const StringVector* path = args.positional.at(0).strings();
    if (!path || path->size() != 1) throw EvalError("source() needs a single file path");
    auto full = detail::resolve_path(ev.context(), path->front());
    Program program;
    try {
      program = parse_program(detail::read_file(full), path->front());
    } catch (const ParseError& e) {
      throw EvalError(e.what());
    }
    Value last;
    for (const auto& expr : program.exprs) last = ev.eval(*expr, caller);
    ev.set_invisible();
    return last;
  });

  for (std::string_view name : {"women"}) env.set(name, *dataset(name));
}

}  // namespace tapscript

#include "pipe.hpp"
