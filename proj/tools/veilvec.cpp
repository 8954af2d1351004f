// Copyright 2026 The veilvec Authors
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

// veilvec <command> [--config FILE] [--seed N] [--out DIR] [--w W]
//
// exit status: 0 ok, 1 usage/config, 2 data or parse error, 3 numerical failure

#include <CLI11.hpp>

#include "veilvec/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> w;
};

veilvec::PipelineConfig resolve(const Options& o) {
  veilvec::PipelineConfig cfg = o.config.empty() ? veilvec::PipelineConfig{} : veilvec::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.w) cfg.protect_w = *o.w;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"veilvec: attribute protection for speaker embeddings"};
  app.require_subcommand(1);
  Options opt;

  using Command = void (*)(const veilvec::PipelineConfig&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"gen", "generate the synthetic corpus and its speaker-disjoint splits", veilvec::cmd_gen},
      {"train-clf", "train the attribute classifier and its PAV calibration", veilvec::cmd_train_clf},
      {"train-ae", "train the adversarial autoencoder", veilvec::cmd_train_ae},
      {"protect", "protect the test split", veilvec::cmd_protect},
      {"eval-privacy", "attribute-privacy metrics for all conditions", veilvec::cmd_eval_privacy},
      {"eval-asv", "speaker-verification metrics for all conditions", veilvec::cmd_eval_asv},
      {"report", "merge all metric files into report.json", veilvec::cmd_report},
      {"all", "run every stage in order", veilvec::run_all},
  };
  Command selected = nullptr;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("--out", opt.out, "run directory");
    if (name == "protect" || name == "all") {
      sub->add_option("--w", opt.w, "decoder condition in [0,1]")->check(CLI::Range(0.0, 1.0));
    }
    sub->callback([&selected, f = fn] { selected = f; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    selected(resolve(opt));
  } catch (const veilvec::ConfigError& e) {
    std::cerr << "veilvec: configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const veilvec::DataError& e) {
    std::cerr << "veilvec: data error: " << e.what() << '\n';
    return kData;
  } catch (const veilvec::NumericalError& e) {
    std::cerr << "veilvec: numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "veilvec: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
