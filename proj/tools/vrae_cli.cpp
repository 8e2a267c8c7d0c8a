#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "vrae/pipeline.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;

struct Options {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool print_config = false;
};

vrae::pipeline::PipelineConfig resolve(const Options& o) {
  using namespace vrae::pipeline;
  PipelineConfig c = preset(o.preset.empty() ? "two-class" : o.preset);
  if (!o.config_path.empty()) c = load_config(o.config_path, c);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw vrae::InvalidArgument("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational recurrent autoencoder pipeline for blade-ice detection"};
  app.require_subcommand(1);
  Options opt;
  std::vector<std::string> stages = vrae::pipeline::stage_names();
  stages.push_back("run");
  for (const auto& name : stages) {
    auto* sub = app.add_subcommand(name, name == "run" ? "Run every stage in order" : "Run the " + name + " stage");
    sub->add_option("--config", opt.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--preset", opt.preset, "two-class or multi-class (default two-class)");
    sub->add_option("--seed", opt.seed, "global seed");
    sub->add_option("--out", opt.out, "output directory for artifacts");
    sub->add_option("--set", opt.overrides, "override one setting, key=value (repeatable)");
    sub->add_flag("--print-config", opt.print_config, "print the resolved configuration and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    const auto config = resolve(opt);
    if (opt.print_config) {
      std::cout << config.to_text();
      return 0;
    }
    const std::vector<std::string> order =
        stage == "run" ? vrae::pipeline::stage_names() : std::vector<std::string>{stage};
    for (const auto& s : order) {
      const auto result = vrae::pipeline::run_stage(s, config);
      const bool block = result.summary.find('\n') != std::string::npos;
      std::cout << "[" << s << "]" << (block ? "\n" : " ") << result.summary << "\n";
      for (const auto& p : result.outputs)
        if (p.extension() != ".csv") std::cout << "  wrote " << p.string() << "\n";
    }
    return 0;
  } catch (const vrae::InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const vrae::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const vrae::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
