#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "criteria.hpp"
#include "vaxmap/io_util.hpp"

namespace vaxmap::acceptance {

namespace {

namespace fs = std::filesystem;

using Snapshot = std::map<std::string, std::string>;

// Every pipeline stage on the example config, each stage in its own
// directory under `root`. Returns the bytes of every file written.
Snapshot run_pipeline(const fs::path& root, const std::string& threads, std::string& log) {
  const std::string c = (fs::path(VAXMAP_SOURCE_DIR) / "configs" / "example.toml").string();
  const std::string r = root.string();
  const std::vector<std::string> common{"-c", c, "--threads", threads, "--iterations", "900", "--burn-in", "300",
                                        "--thin", "3"};
  const std::vector<std::vector<std::string>> stages{
      {"simulate", "--out", r + "/sim"},
      {"fit", "--out", r + "/fit", "--clusters", r + "/sim/clusters.csv", "--grid", r + "/sim/grid"},
      {"predict", "--out", r + "/pred", "--fit", r + "/fit/fit.vaxfit", "--grid", r + "/sim/grid"},
      {"aggregate", "--out", r + "/state", "--draws", r + "/pred/cells.vaxdraws", "--grid", r + "/sim/grid"},
      {"aggregate", "--out", r + "/lga", "--draws", r + "/pred/cells.vaxdraws", "--grid", r + "/sim/grid", "--level",
       "lga"},
      {"rank", "--out", r + "/rank", "--draws", r + "/lga/lga.vaxdraws"},
      {"exceed", "--out", r + "/exceed", "--draws", r + "/lga/lga.vaxdraws", "--thresholds", "0.5,0.8"},
      {"classify", "--out", r + "/classify", "--draws", r + "/lga/lga.vaxdraws", "--grid", r + "/sim/grid"},
      {"validate", "--out", r + "/validate", "--clusters", r + "/sim/clusters.csv", "--grid", r + "/sim/grid"},
  };
  for (const auto& s : stages) {
    std::vector<std::string> args{"vaxmap"};
    args.insert(args.end(), s.begin(), s.end());
    args.insert(args.end(), common.begin(), common.end());
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != cli::kExitOk && code != cli::kExitFailedConvergence) log += s[0] + " exited " + std::to_string(code) + ": " + err.str();
  }
  Snapshot snap;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) snap[fs::relative(e.path(), root).generic_string()] = read_text_file(e.path());
  return snap;
}

std::string compare(const Snapshot& a, const Snapshot& b, int& differing) {
  std::string first;
  differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      if (first.empty()) first = name;
    }
  }
  differing += static_cast<int>(b.size() > a.size() ? b.size() - a.size() : 0);
  return first;
}

}  // namespace

Outcome determinism() {
  std::random_device rd;
  const fs::path root = fs::temp_directory_path() / ("vaxmap-determinism-" + std::to_string(rd()));
  std::string log;
  auto run = [&](const std::string& threads) {
    fs::remove_all(root);
    Snapshot s = run_pipeline(root, threads, log);
    fs::remove_all(root);
    return s;
  };
  const Snapshot a = run("1");
  const Snapshot b = run("1");
  const Snapshot c = run("4");
  int rerun_diff = 0, thread_diff = 0;
  const std::string f1 = compare(a, b, rerun_diff);
  const std::string f2 = compare(a, c, thread_diff);
  std::ostringstream os;
  os << a.size() << " files from simulate, fit, predict, aggregate (state, lga), rank, exceed, classify and validate; "
     << "re-run differs in " << rerun_diff << (f1.empty() ? "" : " (first " + f1 + ")") << ", threads 1 vs 4 differ in "
     << thread_diff << (f2.empty() ? "" : " (first " + f2 + ")");
  if (!log.empty()) os << "; " << log;
  return {log.empty() && a.size() > 20 && rerun_diff == 0 && thread_diff == 0, os.str()};
}

}  // namespace vaxmap::acceptance
