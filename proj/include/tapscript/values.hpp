#pragma once

// Runtime value model: tagged payload plus an attribute map.
//
// Values copy on assignment. Closures, builtins, objects and logger
// references are shared handles, so copying such a value shares the
// referent. Attributes whose name starts with '.' are reserved for
// secondary-flow state: equality and printing ignore them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "syntax.hpp"

namespace tapscript {

class Environment;
class Evaluator;
class Logger;
struct CallArgs;
struct Builtin;
struct Object;
class Value;

using EnvPtr = std::shared_ptr<Environment>;

namespace reserved {
/// Pipe-mode expression counter (numeric scalar).
inline constexpr std::string_view kCounter = ".n";
/// Loggers travelling with a value through a pipe.
inline constexpr std::string_view kLoggers = ".loggers";
/// Pipe-stage function carried by a non-function result, e.g. start_counting().
inline constexpr std::string_view kStage = ".stage";
/// Failure description on an assertion result.
inline constexpr std::string_view kInfo = ".info";
}  // namespace reserved

inline bool is_reserved(std::string_view attr_name) {
  return !attr_name.empty() && attr_name.front() == '.';
}

struct Null {
  bool operator==(const Null&) const = default;
};
using NumericVector = std::vector<double>;
using LogicalVector = std::vector<bool>;
using StringVector = std::vector<std::string>;

struct Closure {
  std::vector<std::string> params;
  NodePtr body;
  EnvPtr env;
  std::string text;
};

/// Ordered named columns of equal length. Columns hold attribute-free
/// numeric, logical or string vectors.
struct Table {
  std::vector<std::string> names;
  std::vector<Value> columns;

  std::size_t rows() const;
  const Value* column(std::string_view name) const;
  void set_column(const std::string& name, Value column);
  bool remove_column(std::string_view name);
};

struct LoggerRefs {
  std::vector<std::shared_ptr<Logger>> items;
};

enum class ValueKind { Null, Numeric, Logical, String, Closure, Builtin, Table, Object, Loggers };

class Value {
 public:
  using AttrMap = std::map<std::string, Value, std::less<>>;
  using Payload = std::variant<Null, NumericVector, LogicalVector, StringVector,
                               std::shared_ptr<const Closure>, std::shared_ptr<const Builtin>, Table,
                               std::shared_ptr<const Object>, LoggerRefs>;

  Value() = default;
  Value(Null) {}
  Value(NumericVector v) : payload_(std::move(v)) {}
  Value(LogicalVector v) : payload_(std::move(v)) {}
  Value(StringVector v) : payload_(std::move(v)) {}
  Value(std::shared_ptr<const Closure> c) : payload_(std::move(c)) {}
  Value(std::shared_ptr<const Builtin> b) : payload_(std::move(b)) {}
  Value(Table t) : payload_(std::move(t)) {}
  Value(std::shared_ptr<const Object> o) : payload_(std::move(o)) {}
  Value(LoggerRefs l) : payload_(std::move(l)) {}

  ValueKind kind() const { return static_cast<ValueKind>(payload_.index()); }
  const Payload& payload() const { return payload_; }

  bool is_null() const { return kind() == ValueKind::Null; }
  bool is_function() const { return kind() == ValueKind::Closure || kind() == ValueKind::Builtin; }
  bool is_vector() const {
    return kind() == ValueKind::Numeric || kind() == ValueKind::Logical || kind() == ValueKind::String;
  }

  const NumericVector* numeric() const { return std::get_if<NumericVector>(&payload_); }
  const LogicalVector* logical() const { return std::get_if<LogicalVector>(&payload_); }
  const StringVector* strings() const { return std::get_if<StringVector>(&payload_); }
  const Table* table() const { return std::get_if<Table>(&payload_); }
  const LoggerRefs* loggers() const { return std::get_if<LoggerRefs>(&payload_); }
  const Closure* closure() const {
    auto p = std::get_if<std::shared_ptr<const Closure>>(&payload_);
    return p ? p->get() : nullptr;
  }
  const Builtin* builtin() const {
    auto p = std::get_if<std::shared_ptr<const Builtin>>(&payload_);
    return p ? p->get() : nullptr;
  }
  const Object* object() const {
    auto p = std::get_if<std::shared_ptr<const Object>>(&payload_);
    return p ? p->get() : nullptr;
  }
  Table* mutable_table() { return std::get_if<Table>(&payload_); }

  /// Element count for vectors; 0 for everything else.
  std::size_t length() const {
    return std::visit(
        [](const auto& p) -> std::size_t {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, NumericVector> || std::is_same_v<T, LogicalVector> ||
                        std::is_same_v<T, StringVector>)
            return p.size();
          else
            return 0;
        },
        payload_);
  }

  // ---- attributes ---------------------------------------------------------

  bool has_attrs() const { return attrs_ && !attrs_->empty(); }
  const AttrMap& attrs() const {
    static const AttrMap empty;
    return attrs_ ? *attrs_ : empty;
  }
  const Value* attr(std::string_view name) const {
    if (!attrs_) return nullptr;
    auto it = attrs_->find(name);
    return it == attrs_->end() ? nullptr : &it->second;
  }
  void set_attr(std::string_view name, Value v) {
    auto next = attrs_ ? std::make_shared<AttrMap>(*attrs_) : std::make_shared<AttrMap>();
    (*next)[std::string(name)] = std::move(v);
    attrs_ = std::move(next);
  }
  void remove_attr(std::string_view name) {
    if (!attr(name)) return;
    auto next = std::make_shared<AttrMap>(*attrs_);
    next->erase(next->find(name));
    attrs_ = next->empty() ? nullptr : std::move(next);
  }
  void set_attrs(const AttrMap& attrs) {
    attrs_ = attrs.empty() ? nullptr : std::make_shared<AttrMap>(attrs);
  }
  void clear_attrs() { attrs_.reset(); }

 private:
  Payload payload_;
  std::shared_ptr<const AttrMap> attrs_;
};

enum ConsumeFlags : unsigned {
  kConsumesNothing = 0,
  kConsumesCounter = 1u << 0,
  kConsumesLoggers = 1u << 1,
};

/// A native function. Eager builtins receive evaluated arguments (plus the
/// argument syntax when called from source); lazy builtins receive the
/// unevaluated call node and implement special forms such as with().
struct Builtin {
  using Eager = std::function<Value(Evaluator&, CallArgs&, const EnvPtr&)>;
  using Lazy = std::function<Value(Evaluator&, const ExprNode&, const EnvPtr&)>;

  std::string name;
  Eager eager;
  Lazy lazy;
  /// Reserved attributes this function deliberately removes from its input;
  /// the pipe operator must not re-attach them.
  unsigned consumes = kConsumesNothing;
};

/// Namespace-like value with named fields, e.g. `simple` exposing `new`.
struct Object {
  std::string name;
  std::vector<std::pair<std::string, Value>> fields;

  const Value* field(std::string_view key) const {
    for (const auto& [k, v] : fields)
      if (k == key) return &v;
    return nullptr;
  }
};

/// Audit object attached to a tracked value; implementations live in
/// loggers.hpp. Holders share one instance.
class Logger {
 public:
  virtual ~Logger() = default;

  virtual std::string_view kind() const = 0;
  virtual std::size_t row_count() const = 0;
  virtual void write_csv(std::ostream& out) const = 0;

  /// Records one step comparing `before` and `after`.
  void add(std::string_view time, std::string_view expression, std::string_view variable,
           const Value& before, const Value& after) {
    ++steps_;
    record(time, expression, variable, before, after);
  }

  int steps() const { return steps_; }
  bool dumped() const { return dumped_; }
  void mark_dumped() { dumped_ = true; }
  const std::string& target_name() const { return target_name_; }
  void set_target_name(std::string name) { target_name_ = std::move(name); }

 protected:
  virtual void record(std::string_view time, std::string_view expression, std::string_view variable,
                      const Value& before, const Value& after) = 0;

 private:
  int steps_ = 0;
  bool dumped_ = false;
  std::string target_name_;
};

// ---- Table --------------------------------------------------------------

inline std::size_t Table::rows() const { return columns.empty() ? 0 : columns.front().length(); }

inline const Value* Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &columns[i];
  return nullptr;
}

inline void Table::set_column(const std::string& name, Value column) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      columns[i] = std::move(column);
      return;
    }
  }
  names.push_back(name);
  columns.push_back(std::move(column));
}

inline bool Table::remove_column(std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      names.erase(names.begin() + static_cast<std::ptrdiff_t>(i));
      columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(i));
      return true;
    }
  }
  return false;
}

// ---- constructors -------------------------------------------------------

inline Value number(double x) { return Value(NumericVector{x}); }
inline Value logical(bool b) { return Value(LogicalVector{b}); }
inline Value string(std::string s) { return Value(StringVector{std::move(s)}); }

inline Value make_builtin(std::string name, Builtin::Eager fn, unsigned consumes = kConsumesNothing) {
  auto b = std::make_shared<Builtin>();
  b->name = std::move(name);
  b->eager = std::move(fn);
  b->consumes = consumes;
  return Value(std::shared_ptr<const Builtin>(std::move(b)));
}

inline Value make_lazy_builtin(std::string name, Builtin::Lazy fn) {
  auto b = std::make_shared<Builtin>();
  b->name = std::move(name);
  b->lazy = std::move(fn);
  return Value(std::shared_ptr<const Builtin>(std::move(b)));
}

/// The value with every reserved attribute removed.
inline Value core(Value v) {
  if (!v.has_attrs()) return v;
  Value::AttrMap kept;
  for (const auto& [k, a] : v.attrs())
    if (!is_reserved(k)) kept.emplace(k, a);
  v.set_attrs(kept);
  return v;
}

/// A length-1 logical TRUE, ignoring attributes.
inline bool is_true(const Value& v) {
  auto l = v.logical();
  return l && l->size() == 1 && (*l)[0];
}

inline std::string_view type_name(const Value& v) {
  switch (v.kind()) {
    case ValueKind::Null: return "NULL";
    case ValueKind::Numeric: return "numeric";
    case ValueKind::Logical: return "logical";
    case ValueKind::String: return "character";
    case ValueKind::Closure: return "closure";
    case ValueKind::Builtin: return "builtin";
    case ValueKind::Table: return "table";
    case ValueKind::Object: return "object";
    case ValueKind::Loggers: return "logger";
  }
  return "?";
}

// ---- deep equality ------------------------------------------------------

namespace detail {

inline bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

inline bool payload_equal(const Value& a, const Value& b);

inline bool visible_attrs_equal(const Value& a, const Value& b) {
  auto ia = a.attrs().begin(), ea = a.attrs().end();
  auto ib = b.attrs().begin(), eb = b.attrs().end();
  for (;;) {
    while (ia != ea && is_reserved(ia->first)) ++ia;
    while (ib != eb && is_reserved(ib->first)) ++ib;
    if (ia == ea || ib == eb) return ia == ea && ib == eb;
    if (ia->first != ib->first) return false;
    if (!payload_equal(ia->second, ib->second) || !visible_attrs_equal(ia->second, ib->second))
      return false;
    ++ia;
    ++ib;
  }
}

inline bool payload_equal(const Value& a, const Value& b) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case ValueKind::Null: return true;
    case ValueKind::Numeric:
      return std::equal(a.numeric()->begin(), a.numeric()->end(), b.numeric()->begin(),
                        b.numeric()->end(), same_double);
    case ValueKind::Logical: return *a.logical() == *b.logical();
    case ValueKind::String: return *a.strings() == *b.strings();
    case ValueKind::Closure: return a.closure() == b.closure();
    case ValueKind::Builtin: return a.builtin() == b.builtin();
    case ValueKind::Object: return a.object() == b.object();
    case ValueKind::Loggers: return a.loggers()->items == b.loggers()->items;
    case ValueKind::Table: {
      const Table& ta = *a.table();
      const Table& tb = *b.table();
      if (ta.names != tb.names) return false;
      for (std::size_t i = 0; i < ta.columns.size(); ++i)
        if (!payload_equal(ta.columns[i], tb.columns[i])) return false;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Structural equality of payloads and non-reserved attributes. Doubles
/// compare by value, with NaN equal to NaN.
inline bool deep_equal(const Value& a, const Value& b) {
  return detail::payload_equal(a, b) && detail::visible_attrs_equal(a, b);
}

// ---- heap-cell metric ---------------------------------------------------

/// Interpreter cells reachable from a value: one per vector element, one per
/// closure or logger reference, plus the cells of every attribute.
inline std::size_t cell_count(const Value& v) {
  std::size_t n = 0;
  switch (v.kind()) {
    case ValueKind::Null:
    case ValueKind::Builtin:
    case ValueKind::Object: break;
    case ValueKind::Numeric:
    case ValueKind::Logical:
    case ValueKind::String: n = v.length(); break;
    case ValueKind::Closure: n = 1; break;
    case ValueKind::Loggers: n = v.loggers()->items.size(); break;
    case ValueKind::Table:
      for (const auto& c : v.table()->columns) n += cell_count(c);
      break;
  }
  for (const auto& [name, a] : v.attrs()) n += cell_count(a);
  return n;
}

// ---- formatting ---------------------------------------------------------

namespace detail {

struct Sci {
  int kpower = 0;  // decimal exponent
  int nsig = 1;    // significant digits needed, at most `digits`
};

inline Sci scientific(double x, int digits) {
  if (x == 0.0) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, std::fabs(x));
  std::string s(buf);
  auto e = s.find('e');
  std::string mantissa;
  for (std::size_t i = 0; i < e; ++i)
    if (s[i] != '.') mantissa.push_back(s[i]);
  Sci out;
  out.kpower = std::atoi(s.c_str() + e + 1);
  out.nsig = static_cast<int>(mantissa.size());
  while (out.nsig > 1 && mantissa[static_cast<std::size_t>(out.nsig - 1)] == '0') --out.nsig;
  return out;
}

/// Common layout for a set of doubles, chosen as R's print does: fixed
/// notation unless scientific is narrower.
struct RealLayout {
  int width = 0;
  int decimals = 0;
  bool sci = false;
};

inline RealLayout layout_reals(const NumericVector& xs, int digits = 7) {
  RealLayout out;
  bool any_finite = false, neg = false;
  int mxsl = 1, rgt = 0, mxe = 0, mne = 0, mxns = 1, special_width = 0;
  bool first = true;
  for (double x : xs) {
    if (!std::isfinite(x)) {
      special_width = std::max(special_width, std::isnan(x) ? 3 : (x < 0 ? 4 : 3));
      continue;
    }
    Sci s = scientific(x, digits);
    bool negative = x < 0;
    neg = neg || negative;
    int left = s.kpower + 1;
    int sleft = (negative ? 1 : 0) + (left <= 0 ? 1 : left);
    int r = std::max(s.nsig - s.kpower - 1, 0);
    if (first) {
      mxsl = sleft;
      rgt = r;
      mxe = mne = s.kpower;
      mxns = s.nsig;
      first = false;
    } else {
      mxsl = std::max(mxsl, sleft);
      rgt = std::max(rgt, r);
      mxe = std::max(mxe, s.kpower);
      mne = std::min(mne, s.kpower);
      mxns = std::max(mxns, s.nsig);
    }
    any_finite = true;
  }
  if (any_finite) {
    int fixed_width = mxsl + rgt + (rgt != 0 ? 1 : 0);
    int e = (mxe >= 100 || mne <= -99) ? 2 : 1;
    int d = mxns - 1;
    int sci_width = (neg ? 1 : 0) + (d > 0 ? 1 : 0) + d + 4 + e;
    if (fixed_width <= sci_width) {
      out = {fixed_width, rgt, false};
    } else {
      out = {sci_width, d, true};
    }
  }
  out.width = std::max(out.width, special_width);
  return out;
}

inline std::string encode_real(double x, const RealLayout& layout) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x < 0 ? "-Inf" : "Inf";
  if (x == 0.0) x = 0.0;  // drop the sign of negative zero
  char buf[512];
  std::snprintf(buf, sizeof buf, layout.sci ? "%.*e" : "%.*f", layout.decimals, x);
  return buf;
}

inline std::string pad_left(std::string_view s, std::size_t width) {
  return s.size() >= width ? std::string(s) : std::string(width - s.size(), ' ') + std::string(s);
}

inline std::string pad_right(std::string_view s, std::size_t width) {
  return s.size() >= width ? std::string(s) : std::string(s) + std::string(width - s.size(), ' ');
}

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Element strings of a vector, not yet padded.
inline std::vector<std::string> vector_cells(const Value& v, bool quote_strings) {
  std::vector<std::string> cells;
  if (auto n = v.numeric()) {
    RealLayout layout = layout_reals(*n);
    for (double x : *n) cells.push_back(encode_real(x, layout));
  } else if (auto l = v.logical()) {
    for (bool b : *l) cells.emplace_back(b ? "TRUE" : "FALSE");
  } else if (auto s = v.strings()) {
    for (const auto& x : *s) cells.push_back(quote_strings ? quote(x) : x);
  }
  return cells;
}

inline std::string format_vector(const Value& v, std::size_t line_width) {
  if (v.length() == 0) {
    if (v.numeric()) return "numeric(0)";
    if (v.logical()) return "logical(0)";
    return "character(0)";
  }
  std::vector<std::string> cells = vector_cells(v, true);
  std::size_t width = 0;
  for (const auto& c : cells) width = std::max(width, c.size());
  const bool left_align = v.strings() != nullptr;
  const std::size_t label_width = std::to_string(cells.size()).size() + 2;
  const std::size_t per_line =
      std::max<std::size_t>(1, (line_width > label_width ? line_width - label_width : 0) / (width + 1));

  std::string out;
  for (std::size_t i = 0; i < cells.size(); i += per_line) {
    if (i) out.push_back('\n');
    out += pad_left("[" + std::to_string(i + 1) + "]", label_width);
    for (std::size_t j = i; j < std::min(cells.size(), i + per_line); ++j) {
      out.push_back(' ');
      bool last = j + 1 == std::min(cells.size(), i + per_line);
      if (left_align)
        out += last ? cells[j] : pad_right(cells[j], width);
      else
        out += pad_left(cells[j], width);
    }
  }
  return out;
}

inline std::string format_table(const Table& t) {
  if (t.columns.empty()) return "table with 0 columns and 0 rows";
  const std::size_t nrow = t.rows();
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> widths;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    cells.push_back(vector_cells(t.columns[c], false));
    std::size_t w = t.names[c].size();
    for (const auto& s : cells.back()) w = std::max(w, s.size());
    widths.push_back(w);
  }
  const std::size_t rn_width = nrow == 0 ? 0 : std::to_string(nrow).size();
  std::string out(rn_width, ' ');
  for (std::size_t c = 0; c < t.columns.size(); ++c) out += " " + pad_left(t.names[c], widths[c]);
  if (nrow == 0) return out + "\n<0 rows>";
  for (std::size_t r = 0; r < nrow; ++r) {
    out += "\n" + pad_right(std::to_string(r + 1), rn_width);
    for (std::size_t c = 0; c < t.columns.size(); ++c) out += " " + pad_left(cells[c][r], widths[c]);
  }
  return out;
}

}  // namespace detail

/// A single number with up to `digits` significant digits, e.g. 1.4732.
inline std::string format_number(double x, int digits = 7) {
  return detail::encode_real(x, detail::layout_reals({x}, digits));
}

/// One vector element as plain text (no quotes, no index marker).
inline std::string format_scalar(const Value& v, std::size_t i) {
  if (auto n = v.numeric()) return format_number((*n)[i]);
  if (auto l = v.logical()) return (*l)[i] ? "TRUE" : "FALSE";
  if (auto s = v.strings()) return (*s)[i];
  return {};
}

/// Conversion used when numbers are promoted to strings.
inline std::string number_to_string(double x) { return format_number(x, 15); }

/// Printed representation. Reserved attributes never show.
inline std::string format_value(const Value& v, std::size_t line_width = 80) {
  std::string out;
  switch (v.kind()) {
    case ValueKind::Null: out = "NULL"; break;
    case ValueKind::Numeric:
    case ValueKind::Logical:
    case ValueKind::String: out = detail::format_vector(v, line_width); break;
    case ValueKind::Closure: out = v.closure()->text; break;
    case ValueKind::Builtin: out = "<builtin: " + v.builtin()->name + ">"; break;
    case ValueKind::Object: {
      out = "<object: " + v.object()->name + ">";
      for (const auto& [k, f] : v.object()->fields) out += "\n$" + k;
      break;
    }
    case ValueKind::Loggers: {
      bool first = true;
      for (const auto& l : v.loggers()->items) {
        if (!first) out.push_back('\n');
        first = false;
        out += "<" + std::string(l->kind()) + " logger: " + std::to_string(l->row_count()) + " rows" +
               (l->dumped() ? ", dumped>" : ">");
      }
      if (first) out = "<no loggers>";
      break;
    }
    case ValueKind::Table: out = detail::format_table(*v.table()); break;
  }
  for (const auto& [name, a] : v.attrs()) {
    if (is_reserved(name)) continue;
    out += "\nattr(,\"" + name + "\")\n" + format_value(a, line_width);
  }
  return out;
}

}  // namespace tapscript
