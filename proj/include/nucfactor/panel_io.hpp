#pragma once

// Long-format CSV ingestion, covariate design construction and the estimate
// archive format.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nucfactor/extract.hpp"

namespace nucfactor {

struct CsvSchema {
  std::string asset = "asset_id";
  std::string period = "period";
  std::string ret = "return";
  /// Characteristic columns to keep; empty keeps every other column.
  std::vector<std::string> characteristics;
};

/// A long-format table pivoted to asset x period grids. Assets keep their
/// order of first appearance; periods are sorted (numerically when every
/// label parses as a number).
struct RawPanel {
  std::vector<std::string> assets;
  std::vector<std::string> periods;
  std::vector<std::string> columns;
  Matrix returns;
  Mask return_present;
  std::vector<Matrix> values;
  std::vector<Mask> present;

  Index column_index(const std::string& name) const;  // -1 when absent
};

RawPanel load_panel(const std::string& path, const CsvSchema& schema = {});
RawPanel parse_panel(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>");

/// (r - 1) / (n - 1) - 0.5 with average ranks for ties; one value maps to 0.
std::vector<double> rank_transform(const std::vector<double>& values);

struct DesignSpec {
  bool intercept = true;
  std::vector<std::string> raw_columns;
  bool rank_transform = true;
  /// Each adds the hat function at the knot 0 and the right ramp of a linear
  /// B-spline on [-0.5, 0.5]; spline inputs are always rank-transformed.
  std::vector<std::string> spline_columns;
};

/// Linear B-spline basis functions kept per spline column at rank value z:
/// (1 - |z| / 0.5, max(z, 0) / 0.5), clipped at zero.
std::pair<double, double> spline_basis(double z);

/// Assembles x_it in the order: intercept, raw columns, then two spline
/// columns per spline characteristic. A cell is observed only when its return
/// and every used characteristic are present; rank transforms run over the
/// observed cells of each period.
Panel build_design(const RawPanel& table, const DesignSpec& spec);

/// Names of the design columns in order.
std::vector<std::string> design_column_names(const DesignSpec& spec);

inline constexpr int kArchiveVersion = 1;

/// Directory with metadata.txt (key=value) and one CSV per numeric block,
/// written with 17 significant digits.
void save_estimate(const FactorEstimate& est, const std::string& dir);
FactorEstimate load_estimate(const std::string& dir);

void write_matrix_csv(const Matrix& m, const std::string& path);
Matrix read_matrix_csv(const std::string& path);

/// key=value lines; '#' starts a comment. Throws FormatError on bad lines.
std::map<std::string, std::string> read_key_values(const std::string& path);

}  // namespace nucfactor
