#include "vrae/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace vrae::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

std::string format_mass(double m) {
  std::ostringstream os;
  os << m;
  return os.str();
}

}  // namespace

std::string class_name(ClassLabel label) {
  if (label == kNormal) return "normal";
  return "zone" + std::to_string(label);
}

// ---------------------------------------------------------------------------

IceConfig IceConfig::parse(std::string_view text) {
  const auto fields = split_fields(trim(text), '-');
  if (fields.size() != 3)
    throw DataError("ice configuration '" + std::string(text) + "' is not of the form x-y-z");
  std::array<double, 3> masses{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!parse_double(fields[i], masses[i]) || masses[i] < 0.0)
      throw DataError("ice configuration '" + std::string(text) + "': invalid mass in zone " +
                      std::to_string(i + 1));
  }
  return {masses[0], masses[1], masses[2]};
}

std::string IceConfig::to_string() const {
  return format_mass(zone1) + "-" + format_mass(zone2) + "-" + format_mass(zone3);
}

ClassLabel IceConfig::label() const {
  const int iced = int(zone1 > 0.0) + int(zone2 > 0.0) + int(zone3 > 0.0);
  if (iced > 1)
    throw DataError("ice configuration " + to_string() + " has ice in more than one zone");
  if (zone1 > 0.0) return 1;
  if (zone2 > 0.0) return 2;
  if (zone3 > 0.0) return 3;
  return kNormal;
}

std::vector<ClassLabel> WindowedDataset::classes() const {
  std::set<ClassLabel> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

WindowedDataset WindowedDataset::subset(const std::vector<std::size_t>& indices) const {
  WindowedDataset out;
  out.feature_names = feature_names;
  out.scaler = scaler;
  out.window_length = window_length;
  out.stride = stride;
  out.windows.reserve(indices.size());
  out.labels.reserve(indices.size());
  out.sim_ids.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset: index out of range");
    out.windows.push_back(windows[i]);
    out.labels.push_back(labels[i]);
    out.sim_ids.push_back(i < sim_ids.size() ? sim_ids[i] : std::string());
  }
  return out;
}

// ---------------------------------------------------------------------------
// I/O

std::map<std::string, IceConfig> load_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metadata file " + path.string());
  std::map<std::string, IceConfig> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split_fields(body, ',');
    if (fields.size() != 2 || fields[0].empty())
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected `sim_id,x-y-z`");
    try {
      const auto config = IceConfig::parse(fields[1]);
      config.label();
      out[std::string(fields[0])] = config;
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_metadata(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, IceConfig>>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metadata file " + path.string());
  for (const auto& [id, cfg] : entries) out << id << ',' << cfg.to_string() << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

TimeSeriesRecord load_csv(const std::filesystem::path& path, std::string sim_id,
                          const IceConfig& config) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file, expected a header row");
  TimeSeriesRecord rec;
  rec.sim_id = std::move(sim_id);
  rec.config = config;
  for (auto f : split_fields(line, ',')) {
    if (f.empty()) throw DataError(path.string() + ":1: empty column name");
    rec.feature_names.emplace_back(f);
  }
  const std::size_t cols = rec.feature_names.size();

  std::vector<double> flat;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, ',');
    if (fields.size() != cols)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(cols) + " columns, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v))
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": column " +
                        std::to_string(c + 1) + " (" + rec.feature_names[c] +
                        "): malformed number '" + std::string(fields[c]) + "'");
      flat.push_back(v);
    }
    ++rows;
  }
  rec.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return rec;
}

TimeSeriesRecord load_csv(const std::filesystem::path& path,
                          const std::map<std::string, IceConfig>& metadata) {
  const std::string id = path.stem().string();
  const auto it = metadata.find(id);
  if (it == metadata.end()) throw DataError("no metadata entry for simulation '" + id + "'");
  return load_csv(path, id, it->second);
}

void write_csv(const TimeSeriesRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t c = 0; c < record.feature_names.size(); ++c)
    out << (c ? "," : "") << record.feature_names[c];
  out << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < record.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < record.values.cols(); ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf, record.values(r, c));
      if (c) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Preprocessing

TimeSeriesRecord select_features(const TimeSeriesRecord& record,
                                 const std::vector<std::string>& names) {
  TimeSeriesRecord out;
  out.sim_id = record.sim_id;
  out.config = record.config;
  out.feature_names = names;
  out.values.resize(record.values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(record.feature_names.begin(), record.feature_names.end(), names[j]);
    if (it == record.feature_names.end()) {
      std::string available;
      for (const auto& n : record.feature_names) available += (available.empty() ? "" : ", ") + n;
      throw DataError("unknown feature '" + names[j] + "'; available: " + available);
    }
    out.values.col(static_cast<Eigen::Index>(j)) =
        record.values.col(static_cast<Eigen::Index>(it - record.feature_names.begin()));
  }
  return out;
}

MinMaxScaler fit_minmax(std::span<const Matrix> grids) {
  if (grids.empty()) throw InvalidArgument("fit_minmax: no training data");
  const Eigen::Index d = grids.front().cols();
  MinMaxScaler s;
  s.min = Vector::Constant(d, std::numeric_limits<double>::infinity());
  s.max = Vector::Constant(d, -std::numeric_limits<double>::infinity());
  bool any_rows = false;
  for (const auto& g : grids) {
    if (g.cols() != d) throw InvalidArgument("fit_minmax: inconsistent feature counts");
    if (g.rows() == 0) continue;
    any_rows = true;
    s.min = s.min.cwiseMin(g.colwise().minCoeff().transpose());
    s.max = s.max.cwiseMax(g.colwise().maxCoeff().transpose());
  }
  if (!any_rows) throw InvalidArgument("fit_minmax: training data has no rows");
  return s;
}

MinMaxScaler fit_minmax(std::span<const TimeSeriesRecord> records) {
  std::vector<Matrix> grids;
  grids.reserve(records.size());
  for (const auto& r : records) grids.push_back(r.values);
  return fit_minmax(std::span<const Matrix>(grids));
}

Matrix apply_minmax(const Matrix& grid, const MinMaxScaler& scaler) {
  if (grid.cols() != scaler.features())
    throw InvalidArgument("apply_minmax: scaler has " + std::to_string(scaler.features()) +
                          " features, data has " + std::to_string(grid.cols()));
  Matrix out(grid.rows(), grid.cols());
  for (Eigen::Index c = 0; c < grid.cols(); ++c) {
    const double lo = scaler.min(c);
    const double range = scaler.max(c) - lo;
    if (range <= 0.0) {
      out.col(c).setZero();
      continue;
    }
    out.col(c) = ((2.0 / range) * (grid.col(c).array() - lo) - 1.0).cwiseMax(-1.0).cwiseMin(1.0);
  }
  return out;
}

TimeSeriesRecord apply_minmax(const TimeSeriesRecord& record, const MinMaxScaler& scaler) {
  TimeSeriesRecord out = record;
  out.values = apply_minmax(record.values, scaler);
  return out;
}

std::vector<Matrix> window(const Matrix& values, Eigen::Index length, Eigen::Index stride) {
  if (length < 1) throw InvalidArgument("window: length must be at least 1");
  if (stride < 1) throw InvalidArgument("window: stride must be at least 1");
  if (length > values.rows())
    throw InvalidArgument("window: length " + std::to_string(length) + " exceeds series length " +
                          std::to_string(values.rows()));
  const Eigen::Index count = (values.rows() - length) / stride + 1;
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index k = 0; k < count; ++k) out.emplace_back(values.middleRows(k * stride, length));
  return out;
}

std::vector<Matrix> window(const TimeSeriesRecord& record, Eigen::Index length,
                           Eigen::Index stride) {
  return window(record.values, length, stride);
}

WindowedDataset make_windows(std::span<const TimeSeriesRecord> records, Eigen::Index length,
                             Eigen::Index stride) {
  if (records.empty()) throw InvalidArgument("make_windows: no records");
  WindowedDataset ds;
  ds.feature_names = records.front().feature_names;
  ds.window_length = length;
  ds.stride = stride;
  for (const auto& r : records) {
    if (r.feature_names != ds.feature_names)
      throw DataError("simulation '" + r.sim_id + "' has different feature columns");
    const ClassLabel label = r.config.label();
    for (auto& w : window(r, length, stride)) {
      ds.windows.push_back(std::move(w));
      ds.labels.push_back(label);
      ds.sim_ids.push_back(r.sim_id);
    }
  }
  return ds;
}

MinMaxScaler scale_split(WindowedDataset& train, WindowedDataset& test) {
  const MinMaxScaler scaler = fit_minmax(std::span<const Matrix>(train.windows));
  for (auto& w : train.windows) w = apply_minmax(w, scaler);
  for (auto& w : test.windows) w = apply_minmax(w, scaler);
  train.scaler = scaler;
  test.scaler = scaler;
  return scaler;
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset,
                                                  double train_fraction, std::uint64_t seed) {
  if (dataset.size() == 0) throw InvalidArgument("split: empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("split: train fraction must lie in (0, 1)");

  const auto classes = dataset.classes();
  std::vector<std::vector<std::size_t>> members(classes.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto pos = std::lower_bound(classes.begin(), classes.end(), dataset.labels[i]);
    members[static_cast<std::size_t>(pos - classes.begin())].push_back(i);
  }

  // Largest-remainder apportionment: the total matches round(f N) and each
  // class is within one window of its exact share.
  const auto total_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> quota(classes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const double exact = train_fraction * static_cast<double>(members[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_train && k < remainders.size(); ++k, ++assigned)
    ++quota[remainders[k].second];

  SeededRng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto idx = members[c];
    rng.shuffle(idx);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<long>(quota[c]));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<long>(quota[c]), idx.end());
  }
  rng.shuffle(train_idx);
  rng.shuffle(test_idx);
  return {dataset.subset(train_idx), dataset.subset(test_idx)};
}

WindowedDataset balance(const WindowedDataset& dataset, std::size_t per_class,
                        std::uint64_t seed) {
  const auto classes = dataset.classes();
  SeededRng rng(seed);
  std::vector<std::size_t> keep;
  for (ClassLabel c : classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset.labels[i] == c) idx.push_back(i);
    if (idx.size() < per_class)
      throw InvalidArgument("balance: class " + class_name(c) + " has only " +
                            std::to_string(idx.size()) + " windows, " +
                            std::to_string(per_class) + " requested");
    rng.shuffle(idx);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<long>(per_class));
  }
  rng.shuffle(keep);
  return dataset.subset(keep);
}

WindowedDataset filter_classes(const WindowedDataset& dataset,
                               const std::vector<ClassLabel>& keep) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (std::find(keep.begin(), keep.end(), dataset.labels[i]) != keep.end()) idx.push_back(i);
  return dataset.subset(idx);
}

}  // namespace vrae::data
