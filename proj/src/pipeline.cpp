#include "vrae/pipeline.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vrae/clustering.hpp"
#include "vrae/io.hpp"
#include "vrae/plot.hpp"
#include "vrae/projection.hpp"
#include "vrae/scoring.hpp"

namespace vrae::pipeline {
namespace fs = std::filesystem;
namespace {

// ---------------------------------------------------------------------------
// Value text
// ---------------------------------------------------------------------------

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw InvalidArgument("config: " + std::string(key) + " = '" + std::string(text) + "' is not a valid number");
  return v;
}

std::string show(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string show_integer(T v) {
  return std::to_string(v);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += show(values[i]);
    else if constexpr (std::is_same_v<T, std::string>)
      out += values[i];
    else
      out += std::to_string(values[i]);
  }
  return out;
}

template <typename T>
std::vector<T> parse_number_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(key, item));
  return out;
}

// ---------------------------------------------------------------------------
// Settings table
// ---------------------------------------------------------------------------

struct Field {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, std::string_view key, std::string_view value)> set;
};

template <typename T, typename Access>
Field number_field(std::string key, Access access) {
  return {key,
          [access](const PipelineConfig& c) {
            const T v = access(c);
            if constexpr (std::is_floating_point_v<T>)
              return show(v);
            else
              return show_integer(v);
          },
          [access](PipelineConfig& c, std::string_view k, std::string_view v) { access(c) = parse_number<T>(k, v); }};
}

template <typename Access>
Field text_field(std::string key, Access access) {
  return {key, [access](const PipelineConfig& c) { return std::string(access(c)); },
          [access](PipelineConfig& c, std::string_view, std::string_view v) { access(c) = std::string(trim(v)); }};
}

template <typename Access>
Field path_field(std::string key, Access access) {
  return {key,
          [access](const PipelineConfig& c) { return access(c).generic_string(); },
          [access](PipelineConfig& c, std::string_view, std::string_view v) { access(c) = fs::path(trim(v)); }};
}

void add_zone_fields(std::vector<Field>& fields, std::size_t zone) {
  const std::string prefix = "synth.zone" + std::to_string(zone + 1) + ".";
  fields.push_back(number_field<double>(prefix + "amplitude_gain",
                                        [zone](auto& c) -> auto& { return c.generate.synth.zones[zone].amplitude_gain; }));
  fields.push_back(number_field<double>(prefix + "sideband_shift_hz",
                                        [zone](auto& c) -> auto& { return c.generate.synth.zones[zone].sideband_shift_hz; }));
  fields.push_back(number_field<double>(prefix + "sideband_gain",
                                        [zone](auto& c) -> auto& { return c.generate.synth.zones[zone].sideband_gain; }));
  fields.push_back(number_field<double>(prefix + "phase_coupling",
                                        [zone](auto& c) -> auto& { return c.generate.synth.zones[zone].phase_coupling; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"preset", [](const PipelineConfig& c) { return c.preset; },
                 [](PipelineConfig& c, std::string_view, std::string_view v) {
                   const auto out = c.out;
                   const auto seed = c.seed;
                   c = preset(trim(v));
                   c.out = out;
                   c.seed = seed;
                 }});
    f.push_back(number_field<std::uint64_t>("seed", [](auto& c) -> auto& { return c.seed; }));
    f.push_back(path_field("out", [](auto& c) -> auto& { return c.out; }));
    f.push_back(text_field("source", [](auto& c) -> auto& { return c.source; }));
    f.push_back(path_field("data_dir", [](auto& c) -> auto& { return c.data_dir; }));

    f.push_back(number_field<int>("generate.normal_simulations",
                                  [](auto& c) -> auto& { return c.generate.normal_simulations; }));
    f.push_back({"generate.zone_simulations",
                 [](const PipelineConfig& c) {
                   return join(std::vector<int>(c.generate.zone_simulations.begin(), c.generate.zone_simulations.end()));
                 },
                 [](PipelineConfig& c, std::string_view k, std::string_view v) {
                   const auto counts = parse_number_list<int>(k, v);
                   if (counts.size() != 3) throw InvalidArgument("config: " + std::string(k) + " needs three counts");
                   std::copy(counts.begin(), counts.end(), c.generate.zone_simulations.begin());
                 }});
    f.push_back({"generate.masses", [](const PipelineConfig& c) { return join(c.generate.masses); },
                 [](PipelineConfig& c, std::string_view k, std::string_view v) {
                   c.generate.masses = parse_number_list<double>(k, v);
                 }});
    f.push_back(number_field<Eigen::Index>("generate.steps",
                                           [](auto& c) -> auto& { return c.generate.steps; }));
    f.push_back(number_field<double>("synth.rotation_hz",
                                     [](auto& c) -> auto& { return c.generate.synth.rotation_hz; }));
    f.push_back(number_field<double>("synth.sample_rate_hz",
                                     [](auto& c) -> auto& { return c.generate.synth.sample_rate_hz; }));
    f.push_back(number_field<int>("synth.harmonics", [](auto& c) -> auto& { return c.generate.synth.harmonics; }));
    f.push_back(number_field<double>("synth.noise_std",
                                     [](auto& c) -> auto& { return c.generate.synth.noise_std; }));
    f.push_back(number_field<double>("synth.steady_level",
                                     [](auto& c) -> auto& { return c.generate.synth.steady_level; }));
    for (std::size_t z = 0; z < 3; ++z) add_zone_fields(f, z);

    f.push_back({"preprocess.features", [](const PipelineConfig& c) { return join(c.preprocess.features); },
                 [](PipelineConfig& c, std::string_view, std::string_view v) { c.preprocess.features = split_list(v); }});
    f.push_back(number_field<Eigen::Index>("preprocess.window_length",
                                           [](auto& c) -> auto& { return c.preprocess.window_length; }));
    f.push_back(number_field<Eigen::Index>("preprocess.stride",
                                           [](auto& c) -> auto& { return c.preprocess.stride; }));
    f.push_back(number_field<double>("preprocess.train_fraction",
                                     [](auto& c) -> auto& { return c.preprocess.train_fraction; }));
    f.push_back({"preprocess.classes",
                 [](const PipelineConfig& c) { return c.preprocess.classes.empty() ? std::string("all") : join(c.preprocess.classes); },
                 [](PipelineConfig& c, std::string_view k, std::string_view v) {
                   c.preprocess.classes = trim(v) == "all" ? std::vector<data::ClassLabel>{} : parse_number_list<int>(k, v);
                 }});
    f.push_back({"preprocess.balance_per_class",
                 [](const PipelineConfig& c) {
                   const long b = c.preprocess.balance_per_class;
                   return b == 0 ? std::string("none") : b < 0 ? std::string("min") : std::to_string(b);
                 },
                 [](PipelineConfig& c, std::string_view k, std::string_view v) {
                   v = trim(v);
                   c.preprocess.balance_per_class = v == "none" ? 0 : v == "min" ? -1 : parse_number<long>(k, v);
                 }});

    f.push_back(number_field<Eigen::Index>("model.hidden_units",
                                           [](auto& c) -> auto& { return c.model.hidden_units; }));
    f.push_back(number_field<Eigen::Index>("model.latent_dim",
                                           [](auto& c) -> auto& { return c.model.latent_dim; }));
    f.push_back(number_field<double>("model.learning_rate", [](auto& c) -> auto& { return c.model.learning_rate; }));
    f.push_back(number_field<double>("model.dropout_rate", [](auto& c) -> auto& { return c.model.dropout_rate; }));
    f.push_back(number_field<double>("model.clip_norm", [](auto& c) -> auto& { return c.model.clip_norm; }));
    f.push_back(number_field<Eigen::Index>("model.batch_size",
                                           [](auto& c) -> auto& { return c.model.batch_size; }));
    f.push_back(number_field<int>("model.epochs", [](auto& c) -> auto& { return c.model.epochs; }));
    f.push_back({"model.anneal.mode", [](const PipelineConfig& c) { return std::string(model::to_string(c.model.anneal.mode)); },
                 [](PipelineConfig& c, std::string_view, std::string_view v) {
                   c.model.anneal.mode = model::parse_anneal_mode(trim(v));
                 }});
    f.push_back(number_field<int>("model.anneal.cycles", [](auto& c) -> auto& { return c.model.anneal.cycles; }));
    f.push_back(number_field<double>("model.anneal.ramp_fraction",
                                     [](auto& c) -> auto& { return c.model.anneal.ramp_fraction; }));
    f.push_back(number_field<double>("model.anneal.beta_max",
                                     [](auto& c) -> auto& { return c.model.anneal.beta_max; }));

    f.push_back(text_field("projection.method", [](auto& c) -> auto& { return c.projection.method; }));
    f.push_back(number_field<double>("projection.gamma", [](auto& c) -> auto& { return c.projection.gamma; }));
    f.push_back(number_field<double>("projection.perplexity",
                                     [](auto& c) -> auto& { return c.projection.perplexity; }));
    f.push_back(number_field<int>("projection.iterations", [](auto& c) -> auto& { return c.projection.iterations; }));
    f.push_back(number_field<double>("projection.learning_rate",
                                     [](auto& c) -> auto& { return c.projection.learning_rate; }));
    f.push_back(number_field<Eigen::Index>("projection.neighbors",
                                           [](auto& c) -> auto& { return c.projection.neighbors; }));

    f.push_back({"clustering.methods", [](const PipelineConfig& c) { return join(c.clustering.methods); },
                 [](PipelineConfig& c, std::string_view, std::string_view v) { c.clustering.methods = split_list(v); }});
    f.push_back(number_field<int>("clustering.k", [](auto& c) -> auto& { return c.clustering.k; }));
    f.push_back(number_field<int>("clustering.restarts", [](auto& c) -> auto& { return c.clustering.restarts; }));
    f.push_back(text_field("clustering.linkage", [](auto& c) -> auto& { return c.clustering.linkage; }));
    f.push_back(number_field<double>("clustering.eps", [](auto& c) -> auto& { return c.clustering.eps; }));
    f.push_back(number_field<int>("clustering.min_pts", [](auto& c) -> auto& { return c.clustering.min_pts; }));
    return f;
  }();
  return table;
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

void require(const fs::path& path, std::string_view producer) {
  if (!fs::exists(path))
    throw DataError("missing input artifact " + path.string() + " (produced by the '" + std::string(producer) +
                    "' stage)");
}

std::string display_path(const fs::path& path, const fs::path& out) {
  const fs::path rel = path.lexically_relative(out);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return path.generic_string();
}

void write_manifest(const PipelineConfig& config, std::string_view stage, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  using Json = nlohmann::ordered_json;
  Json j;
  j["format"] = "vrae.manifest";
  j["version"] = io::kArtifactVersion;
  j["stage"] = stage;
  j["seed"] = config.seed;
  j["stage_seed"] = stage_seed(config.seed, stage);
  Json cfg = Json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = std::move(cfg);
  auto list = [&](const std::vector<fs::path>& paths) {
    Json arr = Json::array();
    for (const auto& p : paths) arr.push_back({{"path", display_path(p, config.out)}, {"fnv1a64", io::file_hash(p)}});
    return arr;
  };
  j["inputs"] = list(inputs);
  j["outputs"] = list(outputs);
  io::write_text(Layout{config.out}.manifest(stage), j.dump(1) + "\n");
}

std::vector<data::ClassLabel> distinct(const std::vector<data::ClassLabel>& labels) {
  const std::set<data::ClassLabel> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

std::string class_counts(const data::WindowedDataset& ds) {
  std::map<data::ClassLabel, std::size_t> counts;
  for (auto l : ds.labels) ++counts[l];
  std::string out;
  for (const auto& [l, n] : counts) out += (out.empty() ? "" : ", ") + data::class_name(l) + " " + std::to_string(n);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void PipelineConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  for (const auto& f : fields())
    if (f.key == key) {
      f.set(*this, key, value);
      return;
    }
  throw InvalidArgument("config: unknown key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

void PipelineConfig::validate() const {
  if (source != "synthetic" && source != "csv")
    throw InvalidArgument("config: source must be 'synthetic' or 'csv'");
  if (generate.normal_simulations < 0 || std::any_of(generate.zone_simulations.begin(), generate.zone_simulations.end(),
                                                     [](int n) { return n < 0; }))
    throw InvalidArgument("config: simulation counts must be non-negative");
  if (generate.masses.empty() ||
      std::any_of(generate.masses.begin(), generate.masses.end(), [](double m) { return !(m > 0.0); }))
    throw InvalidArgument("config: generate.masses must list positive masses");
  if (generate.steps < 1) throw InvalidArgument("config: generate.steps must be positive");
  generate.synth.validate();
  if (preprocess.features.empty()) throw InvalidArgument("config: preprocess.features is empty");
  if (preprocess.window_length < 1 || preprocess.stride < 1)
    throw InvalidArgument("config: window length and stride must be positive");
  if (!(preprocess.train_fraction > 0.0 && preprocess.train_fraction < 1.0))
    throw InvalidArgument("config: preprocess.train_fraction must lie in (0, 1)");
  if (preprocess.balance_per_class < -1) throw InvalidArgument("config: invalid preprocess.balance_per_class");
  model::VraeConfig m = model;
  m.input_dim = static_cast<Eigen::Index>(preprocess.features.size());
  m.validate();
  static const std::set<std::string> projections = {"pca", "kernel_pca", "tsne", "spectral"};
  if (!projections.contains(projection.method))
    throw InvalidArgument("config: unknown projection.method '" + projection.method +
                          "' (expected pca, kernel_pca, tsne or spectral)");
  if (projection.gamma < 0.0) throw InvalidArgument("config: projection.gamma must be non-negative");
  if (projection.iterations < 1 || projection.neighbors < 1 || !(projection.learning_rate > 0.0))
    throw InvalidArgument("config: invalid projection parameters");
  static const std::set<std::string> methods = {"kmeans", "hierarchical", "dbscan"};
  if (clustering.methods.empty()) throw InvalidArgument("config: clustering.methods is empty");
  for (const auto& name : clustering.methods)
    if (!methods.contains(name))
      throw InvalidArgument("config: unknown clustering method '" + name + "' (expected kmeans, hierarchical or dbscan)");
  if (clustering.k < 0 || clustering.restarts < 1 || clustering.min_pts < 1 || clustering.eps < 0.0)
    throw InvalidArgument("config: invalid clustering parameters");
  clustering::parse_linkage(clustering.linkage);
}

std::vector<std::string> preset_names() { return {"two-class", "multi-class"}; }

PipelineConfig preset(std::string_view name) {
  PipelineConfig c;
  c.preset = std::string(name);
  c.model.hidden_units = 90;
  c.model.learning_rate = 5e-4;
  c.model.dropout_rate = 0.2;
  c.model.batch_size = 64;
  c.model.epochs = 200;
  c.model.clip_norm = 5.0;
  c.model.anneal.beta_max = 1e-3;
  if (name == "two-class") {
    c.model.latent_dim = 20;
    c.model.anneal.mode = model::AnnealMode::kConstant;
    c.preprocess.classes = {data::kNormal, 1};
    c.preprocess.balance_per_class = -1;
    c.projection.method = "pca";
  } else if (name == "multi-class") {
    c.model.hidden_units = 128;
    c.model.latent_dim = 5;
    c.model.anneal.mode = model::AnnealMode::kCyclical;
    c.model.anneal.cycles = 4;
    c.model.anneal.ramp_fraction = 0.5;
    c.projection.method = "tsne";
  } else {
    throw InvalidArgument("unknown preset '" + std::string(name) + "' (expected two-class or multi-class)");
  }
  return c;
}

PipelineConfig parse_config(std::string_view text, PipelineConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  bool seen_setting = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw InvalidArgument("config line " + std::to_string(number) + ": expected 'key = value'");
    const std::string_view key = trim(t.substr(0, eq));
    if (key == "preset" && seen_setting)
      throw InvalidArgument("config line " + std::to_string(number) + ": 'preset' must precede other settings");
    try {
      base.set(key, t.substr(eq + 1));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("config line " + std::to_string(number) + ": " + e.what());
    }
    seen_setting = true;
  }
  return base;
}

PipelineConfig load_config(const fs::path& path, PipelineConfig base) {
  if (!fs::exists(path)) throw InvalidArgument("config file " + path.string() + " does not exist");
  return parse_config(io::read_text(path), std::move(base));
}

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  SeededRng rng(seed ^ h);
  return rng.fork_seed();
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

StageResult run_generate(const PipelineConfig& config) {
  config.validate();
  const fs::path dir = config.input_dir();
  SeededRng rng(stage_seed(config.seed, "generate"));
  std::vector<std::pair<std::string, data::IceConfig>> entries;
  for (int i = 0; i < config.generate.normal_simulations; ++i) entries.emplace_back("", data::IceConfig{});
  for (std::size_t zone = 0; zone < 3; ++zone)
    for (int i = 0; i < config.generate.zone_simulations[zone]; ++i) {
      const double mass = config.generate.masses[static_cast<std::size_t>(i) % config.generate.masses.size()];
      data::IceConfig ice;
      (zone == 0 ? ice.zone1 : zone == 1 ? ice.zone2 : ice.zone3) = mass;
      entries.emplace_back("", ice);
    }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  StageResult result;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "sim%03zu", i + 1);
    entries[i].first = id;
    data::SynthConfig synth = config.generate.synth;
    synth.seed = rng.fork_seed();
    const auto record = data::synthesize(synth, entries[i].second, config.generate.steps, id);
    const fs::path path = dir / (std::string(id) + ".csv");
    data::write_csv(record, path);
    result.outputs.push_back(path);
  }
  const fs::path meta = dir / "metadata.csv";
  data::write_metadata(meta, entries);
  result.outputs.push_back(meta);
  write_manifest(config, "generate", {}, result.outputs);
  result.summary = "wrote " + std::to_string(entries.size()) + " simulations of " +
                   std::to_string(config.generate.steps) + " steps to " + dir.string();
  return result;
}

StageResult run_preprocess(const PipelineConfig& config) {
  config.validate();
  const fs::path dir = config.input_dir();
  const fs::path meta = dir / "metadata.csv";
  require(meta, config.source == "csv" ? "external" : "generate");
  const auto metadata = data::load_metadata(meta);
  std::vector<fs::path> inputs{meta};
  std::vector<data::TimeSeriesRecord> records;
  for (const auto& [sim_id, ice] : metadata) {
    const fs::path path = dir / (sim_id + ".csv");
    require(path, "generate");
    records.push_back(data::select_features(data::load_csv(path, sim_id, ice), config.preprocess.features));
    inputs.push_back(path);
  }
  if (records.empty()) throw DataError("metadata " + meta.string() + " lists no simulations");

  data::WindowedDataset all =
      data::make_windows(records, config.preprocess.window_length, config.preprocess.stride);
  const std::size_t windows = all.size();
  if (!config.preprocess.classes.empty()) all = data::filter_classes(all, config.preprocess.classes);
  SeededRng rng(stage_seed(config.seed, "preprocess"));
  const std::uint64_t balance_seed = rng.fork_seed();
  const std::uint64_t split_seed = rng.fork_seed();
  if (config.preprocess.balance_per_class != 0) {
    std::size_t per_class = static_cast<std::size_t>(config.preprocess.balance_per_class);
    if (config.preprocess.balance_per_class < 0) {
      std::map<data::ClassLabel, std::size_t> counts;
      for (auto l : all.labels) ++counts[l];
      per_class = std::numeric_limits<std::size_t>::max();
      for (const auto& [l, n] : counts) per_class = std::min(per_class, n);
    }
    all = data::balance(all, per_class, balance_seed);
  }
  auto [train, test] = data::split(all, config.preprocess.train_fraction, split_seed);
  data::scale_split(train, test);

  const Layout layout{config.out};
  io::save_dataset(train, layout.train());
  io::save_dataset(test, layout.test());
  StageResult result{{layout.train(), layout.test()}, ""};
  write_manifest(config, "preprocess", inputs, result.outputs);
  result.summary = std::to_string(records.size()) + " simulations -> " + std::to_string(windows) + " windows; train " +
                   std::to_string(train.size()) + " (" + class_counts(train) + "), test " +
                   std::to_string(test.size()) + " (" + class_counts(test) + ")";
  return result;
}

StageResult run_train(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.out};
  require(layout.train(), "preprocess");
  require(layout.test(), "preprocess");
  const auto train = io::load_dataset(layout.train());
  const auto test = io::load_dataset(layout.test());
  model::VraeConfig m = config.model;
  m.input_dim = train.features();
  m.seed = stage_seed(config.seed, "train");
  const auto checkpoint = model::train(m, train, test);
  io::save_checkpoint(checkpoint, layout.checkpoint());
  StageResult result{{layout.checkpoint()}, ""};
  write_manifest(config, "train", {layout.train(), layout.test()}, result.outputs);
  std::ostringstream s;
  s << "trained " << checkpoint.epoch << " epochs";
  if (!checkpoint.history.empty()) {
    const auto& last = checkpoint.history.back();
    s << "; final train recon " << last.train.recon << " kl " << last.train.kl << ", validation recon "
      << last.validation.recon;
  }
  result.summary = s.str();
  return result;
}

StageResult run_encode(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.out};
  require(layout.checkpoint(), "train");
  require(layout.test(), "preprocess");
  const auto checkpoint = io::load_checkpoint(layout.checkpoint());
  const auto test = io::load_dataset(layout.test());
  const auto encoded = model::encode_dataset(checkpoint, test);
  io::save_latents({encoded.latents, encoded.labels, test.sim_ids}, layout.latents());
  StageResult result{{layout.latents()}, ""};
  write_manifest(config, "encode", {layout.checkpoint(), layout.test()}, result.outputs);
  result.summary = "encoded " + std::to_string(test.size()) + " test windows into " +
                   std::to_string(encoded.latents.cols()) + " latent dimensions";
  return result;
}

StageResult run_project(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.out};
  require(layout.latents(), "encode");
  const auto latents = io::load_latents(layout.latents());
  const Matrix& x = latents.latents;
  const auto& p = config.projection;
  io::EmbeddingSet set;
  set.labels = latents.labels;
  if (p.method == "pca") {
    set.embedding = projection::pca(x, 2).embedding;
  } else if (p.method == "kernel_pca") {
    const double gamma = p.gamma > 0.0 ? p.gamma : projection::default_rbf_gamma(x);
    set.embedding = projection::kernel_pca_rbf(x, 2, gamma).embedding;
  } else if (p.method == "tsne") {
    projection::TsneOptions opt;
    opt.perplexity = p.perplexity;
    opt.iterations = p.iterations;
    opt.learning_rate = p.learning_rate;
    opt.seed = stage_seed(config.seed, "project");
    set.embedding = projection::tsne(x, opt).embedding;
  } else {
    set.embedding = projection::spectral_embedding(x, p.neighbors, 2);
  }
  if (!all_finite(set.embedding.points)) throw NumericalError(p.method + " produced non-finite coordinates");
  io::save_embedding(set, layout.embedding());
  StageResult result{{layout.embedding()}, ""};
  write_manifest(config, "project", {layout.latents()}, result.outputs);
  result.summary = p.method + " projection of " + std::to_string(x.rows()) + " points";
  for (const auto& w : set.embedding.warnings) result.summary += "\nwarning: " + w;
  return result;
}

StageResult run_cluster(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.out};
  require(layout.embedding(), "project");
  const auto set = io::load_embedding(layout.embedding());
  const Matrix& x = set.embedding.points;
  const auto& c = config.clustering;
  const int k = c.k > 0 ? c.k : static_cast<int>(distinct(set.labels).size());
  const std::uint64_t seed = stage_seed(config.seed, "cluster");
  StageResult result;
  for (const auto& method : c.methods) {
    clustering::ClusterAssignment<double> a;
    if (method == "kmeans") {
      clustering::KMeansOptions opt;
      opt.restarts = c.restarts;
      a = clustering::kmeans_pp(x, k, seed, opt);
    } else if (method == "hierarchical") {
      a = clustering::hierarchical(x, k, clustering::parse_linkage(c.linkage));
    } else {
      const double eps = c.eps > 0.0 ? c.eps : clustering::median_knn_distance(x, Eigen::Index{c.min_pts});
      a = clustering::dbscan(x, eps, c.min_pts);
    }
    io::save_assignment(a, layout.assignment(method));
    result.outputs.push_back(layout.assignment(method));
    result.summary += (result.summary.empty() ? "" : "\n") + method + ": " + std::to_string(a.cluster_count()) +
                      " clusters";
  }
  write_manifest(config, "cluster", {layout.embedding()}, result.outputs);
  return result;
}

StageResult run_score(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.out};
  require(layout.embedding(), "project");
  const auto set = io::load_embedding(layout.embedding());
  std::vector<fs::path> inputs{layout.embedding()};
  std::vector<scoring::ScoreReport> reports;
  for (const auto& method : config.clustering.methods) {
    require(layout.assignment(method), "cluster");
    const auto a = io::load_assignment(layout.assignment(method));
    if (a.labels.size() != set.labels.size())
      throw DataError(layout.assignment(method).string() + " does not match the embedding's point count");
    reports.push_back(scoring::score(set.embedding.points, a, set.labels));
    inputs.push_back(layout.assignment(method));
  }
  io::save_score_reports(reports, layout.score_report());
  StageResult result{{layout.score_report()}, scoring::format_table(reports)};
  write_manifest(config, "score", inputs, result.outputs);
  return result;
}

StageResult run_plot(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.out};
  require(layout.embedding(), "project");
  const auto set = io::load_embedding(layout.embedding());
  io::write_text(layout.plot(), plot::scatter_svg(set.embedding.points, set.labels, set.embedding.method));
  StageResult result{{layout.plot()}, "plotted " + std::to_string(set.labels.size()) + " points"};
  write_manifest(config, "plot", {layout.embedding()}, result.outputs);
  return result;
}

std::vector<std::string> stage_names() {
  return {"generate", "preprocess", "train", "encode", "project", "cluster", "score", "plot"};
}

StageResult run_stage(std::string_view stage, const PipelineConfig& config) {
  static const std::map<std::string, StageResult (*)(const PipelineConfig&), std::less<>> table = {
      {"generate", run_generate}, {"preprocess", run_preprocess}, {"train", run_train},
      {"encode", run_encode},     {"project", run_project},       {"cluster", run_cluster},
      {"score", run_score},       {"plot", run_plot}};
  const auto it = table.find(stage);
  if (it == table.end()) throw InvalidArgument("unknown stage '" + std::string(stage) + "'");
  return it->second(config);
}

}  // namespace vrae::pipeline
