#pragma once

#include <ostream>

#include "manifest.hpp"
#include "run_config.hpp"

namespace vaxmap::cli {

struct Context {
  RunConfig config;
  Manifest manifest;
  std::ostream& out;
};

// Each command writes its files under config.output_dir, registers them with
// the manifest and returns the exit code.
int cmd_simulate(Context& ctx);
int cmd_fit(Context& ctx);
int cmd_predict(Context& ctx);
int cmd_aggregate(Context& ctx);
int cmd_rank(Context& ctx);
int cmd_exceed(Context& ctx);
int cmd_classify(Context& ctx);
int cmd_validate(Context& ctx);

}  // namespace vaxmap::cli
