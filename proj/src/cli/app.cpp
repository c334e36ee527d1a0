// Copyright 2026 The Partiscope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "partiscope/cli/app.hpp"

#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "partiscope/cli/commands.hpp"
#include "partiscope/error.hpp"

namespace partiscope::cli {

namespace {

ConfigMap build_map(const std::vector<std::string>& files, const std::vector<std::string>& sets) {
  ConfigMap map = ConfigMap::defaults();
  for (const auto& f : files) map.load_file(f);
  for (const auto& s : sets) map.apply_override(s);
  return map;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"partiscope: partition-scoped backdoor attack and defense lab"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::vector<std::string> files, sets, run_dirs;
  std::string run_dir, out_dir;

  auto* attack = app.add_subcommand("attack", "partition, poison, train and evaluate");
  attack->add_option("-c,--config", files, "INI config file (repeatable, later files win)");
  attack->add_option("-s,--set", sets, "section.key=value override (repeatable)");
  attack->add_option("-r,--run-dir", run_dir, "run directory (default: output.dir)");

  auto* defend = app.add_subcommand("defend", "run defenses against an attack run");
  defend->add_option("-r,--run-dir", run_dir, "attack run directory")->required();
  defend->add_option("-c,--config", files, "extra INI applied over config.resolved");
  defend->add_option("-s,--set", sets, "section.key=value override (repeatable)");

  auto* report = app.add_subcommand("report", "summarize one or more run directories");
  report->add_option("runs", run_dirs, "run directories")->required();
  report->add_option("-o,--out", out_dir, "output directory (default: <run>/reports/summary)");

  auto* inspect = app.add_subcommand("partition-inspect", "partition sizes and mode overlap");
  inspect->add_option("-c,--config", files, "INI config file (repeatable)");
  inspect->add_option("-s,--set", sets, "section.key=value override (repeatable)");
  inspect->add_option("-r,--run-dir", run_dir, "inspect the partitioner of an attack run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (attack->parsed()) {
      const auto j = cmd_attack(build_map(files, sets), run_dir);
      std::cout << "BA " << j["ba"].get<double>() << "  ASR " << j["asr"].get<double>()
                << "  ASR-other " << j["asr_other"]["mean"].get<double>() << '\n';
    } else if (defend->parsed()) {
      const auto j = cmd_defend(run_dir, files, sets);
      std::cout << j["defenses"].dump(2) << '\n';
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      const std::filesystem::path out =
          out_dir.empty() ? dirs.front() / "reports" / "summary" : std::filesystem::path(out_dir);
      cmd_report(dirs, out);
      std::cout << "summary written to " << out.string() << '\n';
    } else if (inspect->parsed()) {
      std::cout << cmd_partition_inspect(build_map(files, sets), run_dir).dump(2) << '\n';
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace partiscope::cli
