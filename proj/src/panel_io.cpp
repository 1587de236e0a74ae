#include "nucfactor/panel_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "nucfactor/errors.hpp"

namespace nucfactor {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  return r.ec == std::errc() && r.ptr == e;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17e", v);
  return buf;
}

std::string matrix_text(const Matrix& m) {
  std::string out;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

Matrix parse_matrix(const std::string& text, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const std::string& f : split_csv_line(line)) {
      double v = 0.0;
      if (!parse_double(f, v))
        fail(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": bad number '" + f + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::FormatError, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::FormatError, "write failed for " + path);
}

}  // namespace

Index RawPanel::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<Index>(it - columns.begin());
}

RawPanel parse_panel(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorKind::FormatError, source + ": missing header row");
  auto find_col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::FormatError, source + ": no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t asset_col = find_col(schema.asset);
  const std::size_t period_col = find_col(schema.period);
  const std::size_t ret_col = find_col(schema.ret);

  RawPanel raw;
  std::vector<std::size_t> char_cols;
  if (schema.characteristics.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != asset_col && c != period_col && c != ret_col) {
        raw.columns.push_back(header[c]);
        char_cols.push_back(c);
      }
  } else {
    for (const std::string& name : schema.characteristics) {
      raw.columns.push_back(name);
      char_cols.push_back(find_col(name));
    }
  }

  struct Row {
    std::size_t asset;
    std::string period;
    std::vector<double> fields;  // return first, NaN = missing
  };
  std::vector<Row> rows;
  std::unordered_map<std::string, std::size_t> asset_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size())
      fail(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": expected " +
                                       std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    const std::string& asset = f[asset_col];
    const std::string& period = f[period_col];
    if (asset.empty() || period.empty())
      fail(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": empty asset or period");
    auto [it, fresh] = asset_ids.emplace(asset, raw.assets.size());
    if (fresh) raw.assets.push_back(asset);
    Row row{it->second, period, {}};
    auto read = [&](std::size_t c) {
      if (f[c].empty()) return std::nan("");
      double v = 0.0;
      if (!parse_double(f[c], v) || !std::isfinite(v))
        fail(ErrorKind::FormatError, source + ":" + std::to_string(line_no) + ": column '" + header[c] +
                                         "': bad number '" + f[c] + "'");
      return v;
    };
    row.fields.push_back(read(ret_col));
    for (std::size_t c : char_cols) row.fields.push_back(read(c));
    rows.push_back(std::move(row));
  }

  std::vector<std::string> periods;
  for (const Row& r : rows) periods.push_back(r.period);
  std::sort(periods.begin(), periods.end());
  periods.erase(std::unique(periods.begin(), periods.end()), periods.end());
  bool numeric = true;
  std::vector<double> keys(periods.size());
  for (std::size_t k = 0; k < periods.size() && numeric; ++k) numeric = parse_double(periods[k], keys[k]);
  if (numeric) {
    std::vector<std::size_t> order(periods.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::vector<std::string> sorted;
    for (std::size_t k : order) sorted.push_back(periods[k]);
    periods = std::move(sorted);
  }
  std::unordered_map<std::string, Index> period_index;
  for (std::size_t k = 0; k < periods.size(); ++k) period_index[periods[k]] = static_cast<Index>(k);
  raw.periods = periods;

  const Index n = static_cast<Index>(raw.assets.size());
  const Index t_count = static_cast<Index>(periods.size());
  if (n == 0 || t_count == 0) fail(ErrorKind::FormatError, source + ": no data rows");
  raw.returns = Matrix::Zero(n, t_count);
  raw.return_present = Mask::Constant(n, t_count, false);
  raw.values.assign(raw.columns.size(), Matrix::Zero(n, t_count));
  raw.present.assign(raw.columns.size(), Mask::Constant(n, t_count, false));
  Mask seen = Mask::Constant(n, t_count, false);
  for (const Row& r : rows) {
    const Index i = static_cast<Index>(r.asset);
    const Index t = period_index.at(r.period);
    if (seen(i, t))
      fail(ErrorKind::FormatError, source + ": duplicate row for asset '" + raw.assets[r.asset] + "', period '" +
                                       r.period + "'");
    seen(i, t) = true;
    if (!std::isnan(r.fields[0])) {
      raw.returns(i, t) = r.fields[0];
      raw.return_present(i, t) = true;
    }
    for (std::size_t c = 0; c < raw.columns.size(); ++c)
      if (!std::isnan(r.fields[c + 1])) {
        raw.values[c](i, t) = r.fields[c + 1];
        raw.present[c](i, t) = true;
      }
  }
  return raw;
}

RawPanel load_panel(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  return parse_panel(in, schema, path);
}

std::vector<double> rank_transform(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<double> out(n, 0.0);
  if (n <= 1) return out;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::size_t k = 0;
  while (k < n) {
    std::size_t j = k;
    while (j + 1 < n && values[order[j + 1]] == values[order[k]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(k + j) + 1.0;  // ranks are 1-based
    for (std::size_t m = k; m <= j; ++m)
      out[order[m]] = (avg_rank - 1.0) / static_cast<double>(n - 1) - 0.5;
    k = j + 1;
  }
  return out;
}

std::pair<double, double> spline_basis(double z) {
  const double hat = std::max(0.0, 1.0 - std::abs(z) / 0.5);
  const double ramp = std::max(0.0, z) / 0.5;
  return {hat, ramp};
}

std::vector<std::string> design_column_names(const DesignSpec& spec) {
  std::vector<std::string> names;
  if (spec.intercept) names.push_back("intercept");
  for (const auto& c : spec.raw_columns) names.push_back(c);
  for (const auto& c : spec.spline_columns) {
    names.push_back(c + ":hat");
    names.push_back(c + ":ramp");
  }
  return names;
}

Panel build_design(const RawPanel& table, const DesignSpec& spec) {
  const Index n = table.returns.rows();
  const Index t_count = table.returns.cols();
  auto column = [&](const std::string& name) {
    const Index k = table.column_index(name);
    if (k < 0) fail(ErrorKind::ConfigError, "unknown characteristic column '" + name + "'");
    return static_cast<std::size_t>(k);
  };
  std::vector<std::size_t> raw_idx, spline_idx;
  for (const auto& c : spec.raw_columns) raw_idx.push_back(column(c));
  for (const auto& c : spec.spline_columns) spline_idx.push_back(column(c));
  if (!spec.intercept && raw_idx.empty() && spline_idx.empty())
    fail(ErrorKind::ConfigError, "design has no covariates");

  Mask mask = table.return_present;
  for (std::size_t k : raw_idx) mask = mask && table.present[k];
  for (std::size_t k : spline_idx) mask = mask && table.present[k];

  auto ranked = [&](std::size_t k) {
    Matrix out = Matrix::Zero(n, t_count);
    for (Index t = 0; t < t_count; ++t) {
      std::vector<double> vals;
      std::vector<Index> who;
      for (Index i = 0; i < n; ++i)
        if (mask(i, t)) {
          vals.push_back(table.values[k](i, t));
          who.push_back(i);
        }
      const std::vector<double> r = rank_transform(vals);
      for (std::size_t m = 0; m < who.size(); ++m) out(who[m], t) = r[m];
    }
    return out;
  };

  std::vector<Matrix> x;
  if (spec.intercept) x.push_back(Matrix::Ones(n, t_count));
  for (std::size_t k : raw_idx) x.push_back(spec.rank_transform ? ranked(k) : table.values[k]);
  for (std::size_t k : spline_idx) {
    const Matrix z = ranked(k);
    Matrix hat(n, t_count), ramp(n, t_count);
    for (Index t = 0; t < t_count; ++t)
      for (Index i = 0; i < n; ++i) {
        const auto [h, r] = spline_basis(z(i, t));
        hat(i, t) = h;
        ramp(i, t) = r;
      }
    x.push_back(std::move(hat));
    x.push_back(std::move(ramp));
  }
  Matrix y = table.returns;
  return Panel(std::move(y), std::move(mask), x);
}

void write_matrix_csv(const Matrix& m, const std::string& path) { write_text(path, matrix_text(m)); }

Matrix read_matrix_csv(const std::string& path) { return parse_matrix(slurp(path), path); }

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(slurp(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::FormatError, path + ":" + std::to_string(line_no) + ": expected key=value");
    out[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
  }
  return out;
}

namespace {

struct Block {
  const char* file;
  Matrix value;
};

std::vector<Block> estimate_blocks(const FactorEstimate& est) {
  return {{"alpha.csv", est.alpha},
          {"alpha_star.csv", est.alpha_star},
          {"beta.csv", est.beta},
          {"beta_star.csv", est.beta_star},
          {"factors.csv", est.factors}};
}

}  // namespace

void save_estimate(const FactorEstimate& est, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream meta;
  meta << "format_version=" << kArchiveVersion << '\n'
       << "family=" << to_string(est.family.kind) << '\n'
       << "zero_alpha=" << (est.family.zero_alpha ? 1 : 0) << '\n'
       << "n_assets=" << est.n_assets << '\n'
       << "n_covariates=" << est.n_covariates << '\n'
       << "n_periods=" << est.n_periods << '\n'
       << "k_hat=" << est.k_hat << '\n'
       << "delta=" << format_double(est.delta_used) << '\n'
       << "lambda=" << format_double(est.lambda_used) << '\n'
       << "solver_iterations=" << est.solver_iterations << '\n'
       << "solver_converged=" << (est.solver_converged ? 1 : 0) << '\n'
       << "rank_overflow=" << (est.rank_overflow ? 1 : 0) << '\n';
  for (const Block& b : estimate_blocks(est)) {
    const std::string text = matrix_text(b.value);
    write_text((fs::path(dir) / b.file).string(), text);
    meta << "shape." << b.file << '=' << b.value.rows() << 'x' << b.value.cols() << '\n';
    char sum[20];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    meta << "checksum." << b.file << '=' << sum << '\n';
  }
  // Metadata last: an archive without it is incomplete.
  write_text((fs::path(dir) / "metadata.txt").string(), meta.str());
}

FactorEstimate load_estimate(const std::string& dir) {
  const auto meta = read_key_values((fs::path(dir) / "metadata.txt").string());
  auto get = [&](const std::string& key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) fail(ErrorKind::FormatError, dir + ": metadata lacks '" + key + "'");
    return it->second;
  };
  auto get_int = [&](const std::string& key) -> long long {
    long long v = 0;
    const std::string& s = get(key);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      fail(ErrorKind::FormatError, dir + ": metadata '" + key + "' is not an integer");
    return v;
  };
  auto get_double = [&](const std::string& key) {
    double v = 0.0;
    if (!parse_double(get(key), v)) fail(ErrorKind::FormatError, dir + ": metadata '" + key + "' is not a number");
    return v;
  };
  if (get_int("format_version") != kArchiveVersion)
    fail(ErrorKind::FormatError, dir + ": unsupported archive version " + get("format_version"));

  FactorEstimate est;
  try {
    est.family.kind = family_from_string(get("family"));
  } catch (const Error&) {
    fail(ErrorKind::FormatError, dir + ": unknown family '" + get("family") + "'");
  }
  est.family.zero_alpha = get_int("zero_alpha") != 0;
  est.n_assets = get_int("n_assets");
  est.n_covariates = get_int("n_covariates");
  est.n_periods = get_int("n_periods");
  est.k_hat = get_int("k_hat");
  est.delta_used = get_double("delta");
  est.lambda_used = get_double("lambda");
  est.solver_iterations = static_cast<int>(get_int("solver_iterations"));
  est.solver_converged = get_int("solver_converged") != 0;
  est.rank_overflow = get_int("rank_overflow") != 0;

  std::vector<Matrix> blocks;
  for (const Block& b : estimate_blocks(FactorEstimate{})) {
    const std::string path = (fs::path(dir) / b.file).string();
    const std::string text = slurp(path);
    char sum[20];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    if (get(std::string("checksum.") + b.file) != sum)
      fail(ErrorKind::FormatError, path + ": checksum mismatch (truncated or modified)");
    const std::string& shape = get(std::string("shape.") + b.file);
    const auto x = shape.find('x');
    if (x == std::string::npos) fail(ErrorKind::FormatError, dir + ": bad shape '" + shape + "'");
    Index rows = 0, cols = 0;
    const auto r1 = std::from_chars(shape.data(), shape.data() + x, rows);
    const auto r2 = std::from_chars(shape.data() + x + 1, shape.data() + shape.size(), cols);
    if (r1.ec != std::errc() || r1.ptr != shape.data() + x || r2.ec != std::errc() ||
        r2.ptr != shape.data() + shape.size() || rows < 0 || cols < 0)
      fail(ErrorKind::FormatError, dir + ": bad shape '" + shape + "'");
    Matrix m = parse_matrix(text, path);
    if (m.size() == 0) m.resize(rows, cols);
    if (m.rows() != rows || m.cols() != cols) fail(ErrorKind::FormatError, path + ": shape does not match metadata");
    blocks.push_back(std::move(m));
  }
  est.alpha = blocks[0];
  est.alpha_star = blocks[1];
  est.beta = blocks[2];
  est.beta_star = blocks[3];
  est.factors = blocks[4];
  return est;
}

}  // namespace nucfactor
