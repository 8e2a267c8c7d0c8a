#include "vrae/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace vrae::io {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

Json header(std::string_view format) {
  Json j;
  j["format"] = format;
  j["version"] = kArtifactVersion;
  return j;
}

Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw DataError("matrix entry count does not match its declared shape");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!data[k].is_number()) throw DataError("matrix contains a non-numeric entry");
      m(r, c) = data[k++].get<double>();
    }
  return m;
}

void save_json(const Json& j, const fs::path& path) { write_text(path, j.dump(1) + "\n"); }

Json load_json(const fs::path& path, std::string_view format) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("format") || j["format"] != format)
    throw DataError(path.string() + ": not a " + std::string(format) + " artifact");
  if (!j.contains("version") || j["version"] != kArtifactVersion)
    throw DataError(path.string() + ": unsupported " + std::string(format) + " version " +
                    (j.contains("version") ? j["version"].dump() : std::string("(missing)")) +
                    ", expected " + std::to_string(kArtifactVersion));
  return j;
}

// Wraps field access so a missing key surfaces as a data error naming the file.
template <typename F>
auto guarded(const fs::path& path, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Json loss_to_json(const model::LossTerms& l) {
  return Json{{"total", l.total}, {"recon", l.recon}, {"kl", l.kl}};
}

model::LossTerms loss_from_json(const Json& j) {
  return {j.at("total").get<double>(), j.at("recon").get<double>(), j.at("kl").get<double>()};
}

Json config_to_json(const model::VraeConfig& c) {
  Json j;
  j["input_dim"] = c.input_dim;
  j["hidden_units"] = c.hidden_units;
  j["latent_dim"] = c.latent_dim;
  j["learning_rate"] = c.learning_rate;
  j["dropout_rate"] = c.dropout_rate;
  j["clip_norm"] = c.clip_norm;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["anneal"] = {{"mode", model::to_string(c.anneal.mode)},
                 {"cycles", c.anneal.cycles},
                 {"ramp_fraction", c.anneal.ramp_fraction},
                 {"beta_max", c.anneal.beta_max}};
  j["seed"] = c.seed;
  return j;
}

model::VraeConfig config_from_json(const Json& j) {
  model::VraeConfig c;
  c.input_dim = j.at("input_dim").get<Eigen::Index>();
  c.hidden_units = j.at("hidden_units").get<Eigen::Index>();
  c.latent_dim = j.at("latent_dim").get<Eigen::Index>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.batch_size = j.at("batch_size").get<Eigen::Index>();
  c.epochs = j.at("epochs").get<int>();
  const auto& a = j.at("anneal");
  c.anneal.mode = model::parse_anneal_mode(a.at("mode").get<std::string>());
  c.anneal.cycles = a.at("cycles").get<int>();
  c.anneal.ramp_fraction = a.at("ramp_fraction").get<double>();
  c.anneal.beta_max = a.at("beta_max").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

Json string_map(const std::map<std::string, double>& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, double> string_map_from(const Json& j) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) m[k] = v.get<double>();
  return m;
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const fs::path& path) {
  const std::string bytes = read_text(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------

void save_dataset(const data::WindowedDataset& ds, const fs::path& path) {
  Json j = header("vrae.dataset");
  j["window_length"] = ds.window_length;
  j["stride"] = ds.stride;
  j["feature_names"] = ds.feature_names;
  j["scaler"] = {{"min", std::vector<double>(ds.scaler.min.begin(), ds.scaler.min.end())},
                 {"max", std::vector<double>(ds.scaler.max.begin(), ds.scaler.max.end())}};
  j["labels"] = ds.labels;
  j["sim_ids"] = ds.sim_ids;
  Json windows = Json::array();
  for (const auto& w : ds.windows) windows.push_back(matrix_to_json(w));
  j["windows"] = std::move(windows);
  save_json(j, path);
}

data::WindowedDataset load_dataset(const fs::path& path) {
  const Json j = load_json(path, "vrae.dataset");
  return guarded(path, [&] {
    data::WindowedDataset ds;
    ds.window_length = j.at("window_length").get<Eigen::Index>();
    ds.stride = j.at("stride").get<Eigen::Index>();
    ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto mn = j.at("scaler").at("min").get<std::vector<double>>();
    const auto mx = j.at("scaler").at("max").get<std::vector<double>>();
    ds.scaler.min = Eigen::Map<const Vector>(mn.data(), static_cast<Eigen::Index>(mn.size()));
    ds.scaler.max = Eigen::Map<const Vector>(mx.data(), static_cast<Eigen::Index>(mx.size()));
    ds.labels = j.at("labels").get<std::vector<int>>();
    ds.sim_ids = j.at("sim_ids").get<std::vector<std::string>>();
    for (const auto& w : j.at("windows")) ds.windows.push_back(matrix_from_json(w));
    if (ds.labels.size() != ds.windows.size() || ds.sim_ids.size() != ds.windows.size())
      throw DataError(path.string() + ": label, provenance and window counts differ");
    for (const auto& w : ds.windows)
      if (w.rows() != ds.window_length || w.cols() != static_cast<Eigen::Index>(ds.feature_names.size()))
        throw DataError(path.string() + ": window shape does not match the declared length and features");
    return ds;
  });
}

// ---------------------------------------------------------------------------

void save_checkpoint(const model::Checkpoint& ck, const fs::path& path) {
  Json j = header("vrae.checkpoint");
  j["config"] = config_to_json(ck.config);
  j["epoch"] = ck.epoch;
  const auto& names = model::param_names();
  Json weights = Json::array();
  for (std::size_t p = 0; p < ck.weights.tensors.size(); ++p) {
    Json t = matrix_to_json(ck.weights.tensors[p]);
    t["name"] = names[p];
    weights.push_back(std::move(t));
  }
  j["weights"] = std::move(weights);
  Json opt;
  opt["step"] = ck.optimizer.step;
  opt["beta1"] = ck.optimizer.beta1;
  opt["beta2"] = ck.optimizer.beta2;
  opt["epsilon"] = ck.optimizer.epsilon;
  Json m1 = Json::array(), m2 = Json::array();
  for (const auto& m : ck.optimizer.first_moment) m1.push_back(matrix_to_json(m));
  for (const auto& m : ck.optimizer.second_moment) m2.push_back(matrix_to_json(m));
  opt["first_moment"] = std::move(m1);
  opt["second_moment"] = std::move(m2);
  j["optimizer"] = std::move(opt);
  Json history = Json::array();
  for (const auto& e : ck.history)
    history.push_back({{"epoch", e.epoch},
                       {"beta", e.beta},
                       {"train", loss_to_json(e.train)},
                       {"validation", loss_to_json(e.validation)}});
  j["history"] = std::move(history);
  save_json(j, path);
}

model::Checkpoint load_checkpoint(const fs::path& path) {
  const Json j = load_json(path, "vrae.checkpoint");
  model::Checkpoint ck = guarded(path, [&] {
    model::Checkpoint c;
    c.config = config_from_json(j.at("config"));
    c.epoch = j.at("epoch").get<int>();
    const auto& names = model::param_names();
    const auto& weights = j.at("weights");
    if (weights.size() != model::kParamCount)
      throw DataError(path.string() + ": expected " + std::to_string(model::kParamCount) + " weight tensors");
    for (std::size_t p = 0; p < weights.size(); ++p) {
      if (weights[p].at("name").get<std::string>() != names[p])
        throw DataError(path.string() + ": weight " + std::to_string(p) + " should be " + std::string(names[p]));
      c.weights.tensors.push_back(matrix_from_json(weights[p]));
    }
    const auto& opt = j.at("optimizer");
    c.optimizer.step = opt.at("step").get<std::int64_t>();
    c.optimizer.beta1 = opt.at("beta1").get<double>();
    c.optimizer.beta2 = opt.at("beta2").get<double>();
    c.optimizer.epsilon = opt.at("epsilon").get<double>();
    for (const auto& m : opt.at("first_moment")) c.optimizer.first_moment.push_back(matrix_from_json(m));
    for (const auto& m : opt.at("second_moment")) c.optimizer.second_moment.push_back(matrix_from_json(m));
    for (const auto& e : j.at("history"))
      c.history.push_back({e.at("epoch").get<int>(), e.at("beta").get<double>(), loss_from_json(e.at("train")),
                           loss_from_json(e.at("validation"))});
    return c;
  });
  try {
    ck.config.validate();
    ck.weights.check(ck.config);
  } catch (const InvalidArgument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const auto shapes = model::VraeWeights::shapes(ck.config);
  auto moments_ok = [&](const std::vector<Matrix>& ms) {
    if (ms.size() != shapes.size()) return false;
    for (std::size_t p = 0; p < ms.size(); ++p)
      if (ms[p].rows() != shapes[p].first || ms[p].cols() != shapes[p].second) return false;
    return true;
  };
  if (!moments_ok(ck.optimizer.first_moment) || !moments_ok(ck.optimizer.second_moment))
    throw DataError(path.string() + ": optimizer state does not match the weight shapes");
  return ck;
}

// ---------------------------------------------------------------------------

void save_latents(const LatentSet& l, const fs::path& path) {
  Json j = header("vrae.latents");
  j["labels"] = l.labels;
  j["sim_ids"] = l.sim_ids;
  j["latents"] = matrix_to_json(l.latents);
  save_json(j, path);
}

LatentSet load_latents(const fs::path& path) {
  const Json j = load_json(path, "vrae.latents");
  return guarded(path, [&] {
    LatentSet l;
    l.labels = j.at("labels").get<std::vector<int>>();
    l.sim_ids = j.at("sim_ids").get<std::vector<std::string>>();
    l.latents = matrix_from_json(j.at("latents"));
    if (static_cast<std::size_t>(l.latents.rows()) != l.labels.size())
      throw DataError(path.string() + ": latent rows and labels differ in count");
    return l;
  });
}

void save_embedding(const EmbeddingSet& e, const fs::path& path) {
  Json j = header("vrae.embedding");
  j["method"] = e.embedding.method;
  j["parameters"] = string_map(e.embedding.parameters);
  j["source_dim"] = e.embedding.source_dim;
  j["warnings"] = e.embedding.warnings;
  j["labels"] = e.labels;
  j["points"] = matrix_to_json(e.embedding.points);
  save_json(j, path);
}

EmbeddingSet load_embedding(const fs::path& path) {
  const Json j = load_json(path, "vrae.embedding");
  return guarded(path, [&] {
    EmbeddingSet e;
    e.embedding.method = j.at("method").get<std::string>();
    e.embedding.parameters = string_map_from(j.at("parameters"));
    e.embedding.source_dim = j.at("source_dim").get<Eigen::Index>();
    e.embedding.warnings = j.at("warnings").get<std::vector<std::string>>();
    e.labels = j.at("labels").get<std::vector<int>>();
    e.embedding.points = matrix_from_json(j.at("points"));
    if (static_cast<std::size_t>(e.embedding.points.rows()) != e.labels.size())
      throw DataError(path.string() + ": point rows and labels differ in count");
    return e;
  });
}

void save_assignment(const clustering::ClusterAssignment<double>& a, const fs::path& path) {
  Json j = header("vrae.assignment");
  j["method"] = a.method;
  j["parameters"] = string_map(a.parameters);
  j["labels"] = a.labels;
  j["centroids"] = matrix_to_json(a.centroids);
  j["inertia"] = a.inertia ? Json(*a.inertia) : Json(nullptr);
  j["inertia_trace"] = a.inertia_trace;
  Json merges = Json::array();
  for (const auto& m : a.merges)
    merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
  j["merges"] = std::move(merges);
  save_json(j, path);
}

clustering::ClusterAssignment<double> load_assignment(const fs::path& path) {
  const Json j = load_json(path, "vrae.assignment");
  return guarded(path, [&] {
    clustering::ClusterAssignment<double> a;
    a.method = j.at("method").get<std::string>();
    a.parameters = string_map_from(j.at("parameters"));
    a.labels = j.at("labels").get<std::vector<int>>();
    a.centroids = matrix_from_json(j.at("centroids"));
    if (!j.at("inertia").is_null()) a.inertia = j.at("inertia").get<double>();
    a.inertia_trace = j.at("inertia_trace").get<std::vector<double>>();
    for (const auto& m : j.at("merges"))
      a.merges.push_back({m.at("left").get<Eigen::Index>(), m.at("right").get<Eigen::Index>(),
                          m.at("height").get<double>(), m.at("size").get<Eigen::Index>()});
    return a;
  });
}

// ---------------------------------------------------------------------------

void save_score_reports(const std::vector<scoring::ScoreReport>& reports, const fs::path& path) {
  Json j = header("vrae.score_report");
  Json arr = Json::array();
  for (const auto& r : reports) {
    Json o;
    o["method"] = r.method;
    o["accuracy"] = r.accuracy;
    o["auc"] = r.auc;
    o["auc_method"] = r.auc_method;
    o["precision"] = r.precision;
    o["recall"] = r.recall;
    o["f1"] = r.f1;
    o["classes"] = r.classes;
    o["clusters"] = r.clusters;
    o["confusion"] = r.confusion;
    Json matching = Json::array();
    for (const auto& [cluster, cls] : r.cluster_to_class) matching.push_back({{"cluster", cluster}, {"class", cls}});
    o["cluster_to_class"] = std::move(matching);
    Json per = Json::array();
    for (const auto& c : r.per_class)
      per.push_back({{"label", c.label},
                     {"support", c.support},
                     {"precision", c.precision},
                     {"recall", c.recall},
                     {"f1", c.f1}});
    o["per_class"] = std::move(per);
    arr.push_back(std::move(o));
  }
  j["reports"] = std::move(arr);
  j["table"] = scoring::format_table(reports);
  save_json(j, path);
}

std::vector<scoring::ScoreReport> load_score_reports(const fs::path& path) {
  const Json j = load_json(path, "vrae.score_report");
  return guarded(path, [&] {
    std::vector<scoring::ScoreReport> out;
    for (const auto& o : j.at("reports")) {
      scoring::ScoreReport r;
      r.method = o.at("method").get<std::string>();
      r.accuracy = o.at("accuracy").get<double>();
      r.auc = o.at("auc").get<double>();
      r.auc_method = o.at("auc_method").get<std::string>();
      r.precision = o.at("precision").get<double>();
      r.recall = o.at("recall").get<double>();
      r.f1 = o.at("f1").get<double>();
      r.classes = o.at("classes").get<std::vector<int>>();
      r.clusters = o.at("clusters").get<std::vector<int>>();
      r.confusion = o.at("confusion").get<std::vector<std::vector<std::size_t>>>();
      for (const auto& m : o.at("cluster_to_class")) r.cluster_to_class[m.at("cluster").get<int>()] = m.at("class").get<int>();
      for (const auto& c : o.at("per_class"))
        r.per_class.push_back({c.at("label").get<int>(), c.at("support").get<std::size_t>(),
                               c.at("precision").get<double>(), c.at("recall").get<double>(),
                               c.at("f1").get<double>()});
      out.push_back(std::move(r));
    }
    return out;
  });
}

}  // namespace vrae::io
