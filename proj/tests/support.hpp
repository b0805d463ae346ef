#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/core.h>

#include <tapscript/tapscript.hpp>

namespace tapscript::testing {

inline std::filesystem::path scripts_dir() { return TAPSCRIPT_SCRIPTS_DIR; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("tapscript-{}-{}-{}", ::getpid(), counter++, std::random_device{}());
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A context writing to string streams, with a fixed clock. Logs go to a
/// scratch directory unless log_dir is changed.
struct Session {
  TempDir scratch;
  std::ostringstream out;
  std::ostringstream err;
  EvalContext ctx;

  explicit Session(std::shared_ptr<Clock> clock = std::make_shared<FixedClock>())
      : ctx(make_context(&out, &err, std::move(clock))) {
    ctx.log_dir = scratch.path();
  }

  RunResult run(const std::string& source, const HookList& hooks = {}, MaskSet masks = default_masks(),
                RunOptions options = {}) {
    return run_program(parse_program(source, "script.ts"), hooks, masks, ctx, options);
  }

  /// Evaluates every expression in a child of the builtins; returns the last.
  Value eval(const std::string& source) {
    Program p = parse_program(source, "<eval>");
    EnvPtr env = new_environment(ctx.builtins);
    Value last;
    for (const auto& e : p.exprs) last = eval_expr(*e, env, ctx);
    return last;
  }
};

inline double num(const Value& v, std::size_t i = 0) { return v.numeric()->at(i); }

/// Random straight-line programs over scalar x, y, z that never fail to
/// evaluate.
inline std::vector<std::string> random_statements(std::mt19937& rng, std::size_t k) {
  std::vector<std::string> vars{"x", "y", "z"};
  std::vector<std::string> defined;
  std::uniform_int_distribution<int> small(-9, 9);
  auto pick = [&](const std::vector<std::string>& from) {
    return from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)];
  };
  auto operand = [&]() -> std::string {
    if (defined.empty() || rng() % 3 == 0) return std::to_string(small(rng));
    return pick(defined);
  };
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) {
    const std::string target = pick(vars);
    std::string stmt;
    switch (rng() % 6) {
      case 0: stmt = fmt::format("{} <- {}", target, operand()); break;
      case 1: stmt = fmt::format("{} <- {} + {}", target, operand(), operand()); break;
      case 2: stmt = fmt::format("{} <- sum(c({}, {}, {}))", target, operand(), operand(), operand()); break;
      case 3: stmt = fmt::format("{} <- {} * {}", target, operand(), operand()); break;
      case 4: stmt = defined.empty() ? operand() : fmt::format("sum({})", pick(defined)); break;
      default: stmt = fmt::format("{} <- abs({})", target, operand()); break;
    }
    if (stmt.find("<-") != std::string::npos &&
        std::find(defined.begin(), defined.end(), target) == defined.end())
      defined.push_back(target);
    out.push_back(stmt);
  }
  return out;
}

/// Random scripts that start by binding x and then sometimes change it.
inline std::vector<std::string> random_mutation_script(std::mt19937& rng, std::size_t k) {
  std::uniform_int_distribution<int> small(-5, 5);
  std::vector<std::string> out{fmt::format("x <- c({}, {}, {})", small(rng), small(rng), small(rng))};
  for (std::size_t i = 1; i < k; ++i) {
    switch (rng() % 9) {
      case 0: out.push_back("x <- x + 1"); break;
      case 1: out.push_back(fmt::format("x[{}] <- {}", 1 + rng() % 3, small(rng))); break;
      case 2: out.push_back("y <- x"); break;
      case 3: out.push_back("x <- x"); break;
      case 4: out.push_back("x <- x * 1"); break;
      case 5: out.push_back("x[x < 0] <- 0"); break;
      case 6: out.push_back("x <- abs(x)"); break;
      case 7: out.push_back(fmt::format("z <- {}", small(rng))); break;
      default: out.push_back("sum(x)"); break;
    }
  }
  return out;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

// ---- random values ----------------------------------------------------------

// Independent cell counter: walks the payload variant directly.
inline std::size_t oracle_cells(const Value& v) {
  std::size_t n = std::visit(
      [](const auto& p) -> std::size_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NumericVector> || std::is_same_v<T, StringVector> ||
                      std::is_same_v<T, LogicalVector>) {
          return p.size();
        } else if constexpr (std::is_same_v<T, Table>) {
          std::size_t total = 0;
          for (const auto& col : p.columns) total += oracle_cells(col);
          return total;
        } else if constexpr (std::is_same_v<T, std::shared_ptr<const Closure>>) {
          return 1;
        } else if constexpr (std::is_same_v<T, LoggerRefs>) {
          return p.items.size();
        } else {
          return 0;
        }
      },
      v.payload());
  for (const auto& [name, a] : v.attrs()) n += oracle_cells(a);
  return n;
}

struct ValueGen {
  std::mt19937 rng;
  Value closure;

  Value vector() {
    std::size_t len = rng() % 6;
    switch (rng() % 3) {
      case 0: {
        NumericVector v;
        for (std::size_t i = 0; i < len; ++i) v.push_back(static_cast<double>(static_cast<int>(rng() % 200) - 100) / 8);
        return Value(v);
      }
      case 1: {
        LogicalVector v;
        for (std::size_t i = 0; i < len; ++i) v.push_back(rng() % 2);
        return Value(v);
      }
      default: {
        StringVector v;
        for (std::size_t i = 0; i < len; ++i) v.push_back(std::string(rng() % 4, static_cast<char>('a' + rng() % 3)));
        return Value(v);
      }
    }
  }

  Value any(int depth = 0) {
    Value v;
    switch (rng() % 7) {
      case 0: v = Value(); break;
      case 1: v = closure; break;
      case 2: v = make_builtin("b", [](Evaluator&, CallArgs&, const EnvPtr&) { return Value(); }); break;
      case 3: {
        Table t;
        const std::size_t rows = rng() % 4, cols = 1 + rng() % 3;
        for (std::size_t c = 0; c < cols; ++c) {
          NumericVector col;
          for (std::size_t r = 0; r < rows; ++r) col.push_back(static_cast<double>(rng() % 10));
          t.set_column("c" + std::to_string(c), Value(col));
        }
        v = Value(t);
        break;
      }
      default: v = vector();
    }
    if (depth < 2) {
      const std::size_t attrs = rng() % 3;
      for (std::size_t i = 0; i < attrs; ++i)
        v.set_attr(rng() % 2 ? ".n" : "note" + std::to_string(rng() % 2), any(depth + 1));
    }
    return v;
  }
};

inline ValueGen make_gen(unsigned seed) {
  Session s;
  return ValueGen{std::mt19937(seed), s.eval("function(a) a + 1")};
}

// ---- composed hook sequencing ---------------------------------------------

inline std::map<std::string, Value> snapshot(const Environment& env) {
  return {env.bindings().begin(), env.bindings().end()};
}

/// deep_equal, except that closures from separate runs match when their
/// parameters and bodies do (deep_equal compares closures by identity).
inline bool same_user_value(const Value& a, const Value& b) {
  const Closure* f = a.closure();
  const Closure* g = b.closure();
  if (f && g) return f->params == g->params && structurally_equal(*f->body, *g->body);
  return deep_equal(a, b);
}

inline bool same_bindings(const std::map<std::string, Value>& a, const std::map<std::string, Value>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || !same_user_value(v, it->second)) return false;
  }
  return true;
}

/// State threaded through composed expressions: a runtime plus hooks.
struct FlowState {
  const Program* program = nullptr;
  const EvalContext* ctx = nullptr;
  EnvPtr runtime;
  RunStores stores;
  HookList hooks;
  std::size_t last = 0;  // index of the last primary expression run
};

inline std::vector<Expression<FlowState>> primaries(const Program& p) {
  std::vector<Expression<FlowState>> out;
  for (std::size_t i = 0; i < p.exprs.size(); ++i)
    out.push_back([i](FlowState& s) {
      eval_expr(*s.program->exprs[i], s.runtime, *s.ctx);
      s.last = i;
    });
  return out;
}

inline void hook_step(FlowState& s) {
  const std::string text = source_slice(*s.program, s.program->exprs[s.last]->span);
  StepInfo step{s.last + 1, *s.program->exprs[s.last], text, s.runtime, s.stores, *s.ctx};
  for (auto& h : s.hooks) {
    h->before_step(step);
    h->on_step(step);
  }
}

struct FlowOutcome {
  std::vector<HookReport> reports;
  std::map<std::string, Value> bindings;
};

inline FlowOutcome execute_flow(const Program& p, const EvalContext& ctx,
                const std::function<Expression<FlowState>(std::span<const Expression<FlowState>>,
                                                              const Expression<FlowState>&)>& sequence) {
  FlowState s;
  s.program = &p;
  s.ctx = &ctx;
  s.runtime = new_environment(ctx.builtins);
  s.hooks.push_back(counting_hook(false));
  s.hooks.push_back(memory_hook());
  s.hooks.push_back(change_hook("x"));
  for (auto& h : s.hooks) h->on_start(s.stores, *ctx.clock);
  auto es = primaries(p);
  sequence(es, Expression<FlowState>(hook_step))(s);
  FlowOutcome o;
  for (auto& h : s.hooks) o.reports.push_back(h->on_finish());
  o.bindings = snapshot(*s.runtime);
  return o;
}

}  // namespace tapscript::testing
