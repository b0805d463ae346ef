#pragma once

// Command-line front end: `run` executes a script with optional hooks,
// `test` runs test files.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "tapscript.hpp"

namespace tapscript {

enum ExitCode : int {
  kExitOk = 0,
  kExitRuntimeError = 1,
  kExitTestFailures = 2,
  kExitParseError = 3,
  kExitUsage = 4,
};

namespace cli_detail {

/// "real", "fixed" or "fixed:STEP_SECONDS".
inline std::shared_ptr<Clock> parse_clock(const std::string& spec) {
  if (spec == "real") return std::make_shared<SystemClock>();
  if (spec == "fixed") return std::make_shared<FixedClock>();
  if (spec.rfind("fixed:", 0) == 0) {
    const std::string step_text = spec.substr(6);
    double step = 0;
    auto [end, ec] = std::from_chars(step_text.data(), step_text.data() + step_text.size(), step);
    if (ec == std::errc() && end == step_text.data() + step_text.size() && step >= 0)
      return std::make_shared<FixedClock>(FixedClock::default_start(), step);
  }
  return nullptr;
}

inline std::string describe(const RunError& e) {
  if (!e.span) return fmt::format("Error: {}", e.message);
  return fmt::format("Error in {}:{}: {}", e.span->file, e.span->start_line, e.message);
}

struct RunOptionsCli {
  std::string file;
  bool count = false;
  bool count_gated = false;
  bool time = false;
  bool mem = false;
  std::vector<std::string> track;
  std::string log_dir = ".";
  std::string report;
  bool print_env = false;
  std::string clock = "real";
};

inline int run_command(const RunOptionsCli& opt, std::ostream& out, std::ostream& err) {
  auto clock = parse_clock(opt.clock);
  if (!clock) {
    err << fmt::format("invalid --clock value '{}'; expected real, fixed or fixed:STEP_SECONDS\n", opt.clock);
    return kExitUsage;
  }
  EvalContext ctx = make_context(&out, &err, clock);
  ctx.log_dir = opt.log_dir;
  const std::filesystem::path path = opt.file;

  HookList hooks;
  if (opt.count) hooks.push_back(counting_hook(false));
  if (opt.count_gated) hooks.push_back(counting_hook(true));
  if (opt.time) hooks.push_back(timing_hook());
  if (opt.mem) hooks.push_back(memory_hook());
  for (const auto& name : opt.track) hooks.push_back(change_hook(name));

  Program program;
  try {
    program = load_program(path, path.string());
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return kExitParseError;
  } catch (const std::exception& e) {
    err << "Error: " << e.what() << '\n';
    return kExitRuntimeError;
  }

  RunResult result = run_program(program, hooks, default_masks(), ctx);

  for (const auto& r : result.reports) err << fmt::format("{}: {}\n", r.name, r.message);
  if (!opt.report.empty()) {
    std::ofstream rep(opt.report, std::ios::binary | std::ios::trunc);
    if (!rep) {
      err << fmt::format("Error: cannot write report file '{}'\n", opt.report);
      return kExitRuntimeError;
    }
    csv::write_row(rep, {"hook", "step", "metric", "value"});
    for (const auto& r : result.reports)
      for (const auto& row : r.rows) csv::write_row(rep, {r.name, std::to_string(row.step), row.metric, row.value});
  }
  if (opt.print_env) {
    for (const auto& [name, value] : result.runtime->bindings()) {
      out << name << ":\n" << format_value(value) << '\n';
    }
  }
  if (result.error) {
    err << describe(*result.error) << '\n';
    return kExitRuntimeError;
  }
  return kExitOk;
}

inline std::vector<std::filesystem::path> collect_test_files(const std::filesystem::path& target) {
  if (!std::filesystem::is_directory(target)) return {target};
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(target)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("test_", 0) == 0 && entry.path().extension() == ".ts")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

struct FileOutcome {
  std::string out;
  std::string err;
  int code = kExitOk;
};

inline FileOutcome run_one_test_file(const std::filesystem::path& file, bool passes) {
  FileOutcome outcome;
  std::ostringstream out, err;
  EvalContext ctx = make_context(&out, &err);
  try {
    auto results = run_test_file(file, ctx);
    out << format_results(results, passes);
    if (std::any_of(results.begin(), results.end(), [](const TestResult& r) { return !r.passed; }))
      outcome.code = kExitTestFailures;
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    outcome.code = kExitParseError;
  } catch (const std::exception& e) {
    err << "Error: " << e.what() << '\n';
    outcome.code = kExitRuntimeError;
  }
  outcome.out = out.str();
  outcome.err = err.str();
  return outcome;
}

/// Runs each file on a worker pool; output is emitted in path order. The
/// exit code is the most severe one seen (parse > runtime > failures).
inline int test_command(const std::string& target, bool passes, std::ostream& out, std::ostream& err) {
  if (!std::filesystem::exists(target)) {
    err << fmt::format("Error: cannot open file '{}'\n", target);
    return kExitRuntimeError;
  }
  const auto files = collect_test_files(target);
  std::vector<FileOutcome> outcomes(files.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers =
      std::min<std::size_t>(files.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < files.size(); i = next++) outcomes[i] = run_one_test_file(files[i], passes);
    });
  for (auto& t : pool) t.join();

  int code = kExitOk;
  auto rank = [](int c) {
    switch (c) {
      case kExitParseError: return 3;
      case kExitRuntimeError: return 2;
      case kExitTestFailures: return 1;
      default: return 0;
    }
  };
  for (const auto& o : outcomes) {
    out << o.out;
    err << o.err;
    if (rank(o.code) > rank(code)) code = o.code;
  }
  return code;
}

}  // namespace cli_detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tapscript interpreter", "tapscript"};
  app.require_subcommand(1);

  cli_detail::RunOptionsCli run_opt;
  auto* run = app.add_subcommand("run", "Run a script");
  run->add_option("file", run_opt.file, "Script to run")->required();
  run->add_flag("--count", run_opt.count, "Count expressions");
  run->add_flag("--count-gated", run_opt.count_gated, "Count expressions after start_counting()");
  run->add_flag("--time", run_opt.time, "Time each expression");
  run->add_flag("--mem", run_opt.mem, "Report interpreter cells after each expression");
  run->add_option("--track", run_opt.track, "Report whether each expression changed NAME")->take_all()->expected(1);
  run->add_option("--log-dir", run_opt.log_dir, "Directory for change logs");
  run->add_option("--report", run_opt.report, "Write hook rows to a CSV file");
  run->add_flag("--print-env", run_opt.print_env, "Print final bindings");
  run->add_option("--clock", run_opt.clock, "real, fixed or fixed:STEP_SECONDS");

  std::string test_target;
  bool passes = false;
  auto* test = app.add_subcommand("test", "Run test files");
  test->add_option("target", test_target, "Test file or directory")->required();
  test->add_flag("--passes", passes, "Show passing results too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  if (*run) return cli_detail::run_command(run_opt, out, err);
  return cli_detail::test_command(test_target, passes, out, err);
}

}  // namespace tapscript
