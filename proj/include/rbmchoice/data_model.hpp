#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rbmchoice {

struct IndicatorVar {
  std::string name;
  std::string alternative;  // the mode the indicator refers to; may be empty
};

/// Names of every variable in a survey, grouped by role. Alternative-specific
/// attributes are stored wide in files as `<var>_<alternative>`.
struct VariableCatalog {
  std::vector<std::string> alternatives;
  std::size_t reference = 0;
  std::vector<std::string> alt_specific_vars;
  std::vector<std::string> generic_vars;
  std::vector<IndicatorVar> indicator_vars;

  std::size_t n_alternatives() const { return alternatives.size(); }
  std::size_t n_attributes() const { return alt_specific_vars.size(); }
  std::size_t n_generic() const { return generic_vars.size(); }
  std::size_t n_indicators() const { return indicator_vars.size(); }

  std::optional<std::size_t> alternative_index(const std::string& name) const;
  std::optional<std::size_t> attribute_index(const std::string& name) const;
  std::optional<std::size_t> generic_index(const std::string& name) const;
  std::optional<std::size_t> indicator_index(const std::string& name) const;

  /// Throws std::invalid_argument when names collide or the reference is out of range.
  void check() const;
};

struct ObservationRow {
  Eigen::MatrixXd alt_attributes;  // alternatives x alt-specific vars
  Eigen::VectorXd generic;
  std::size_t choice = 0;
  std::vector<std::uint8_t> availability;
  std::optional<Eigen::VectorXd> indicators;  // absent for RP-only rows

  std::size_t n_available() const;
};

struct SurveyDataset {
  VariableCatalog catalog;
  std::vector<ObservationRow> rows;
  std::vector<double> scale_factors;  // one per alt-specific var

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  bool has_indicators() const;
};

/// Data problem found while reading a file. `row` is the 1-based data row
/// (the header is row 0); 0 means the problem is not tied to a row.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t row = 0);
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

enum class IndicatorCoding { binary, likert5 };

/// A raw continuous column expanded into one-hot generic variables.
struct BinnedVariable {
  std::string source;
  std::vector<double> edges;
  std::vector<std::string> outputs;  // edges.size() + 1 generic variable names
};

struct LoadOptions {
  char delimiter = ',';
  std::vector<double> scale_factors;  // empty means 1 for every attribute
  IndicatorCoding indicator_coding = IndicatorCoding::binary;
  bool likert_flip = false;
  std::vector<BinnedVariable> binned;
};

SurveyDataset load_dataset(const std::filesystem::path& path, const VariableCatalog& catalog,
                           const LoadOptions& options = {});

/// Writes stored values (already scaled) with round-trip precision.
void write_dataset(const SurveyDataset& dataset, const std::filesystem::path& path,
                   char delimiter = ',');
void write_dataset(const SurveyDataset& dataset, std::ostream& out, char delimiter = ',');

/// 1, 2, 3 -> 1 and 4, 5 -> 0; `flip` swaps the image.
int binarize_likert(int response, bool flip = false);

/// One-hot bin membership with left-closed bins; below the first edge is bin 0,
/// at or beyond the last edge is the last bin.
std::vector<int> categorize_continuous(double value, std::span<const double> bin_edges);

struct InvariantCheck {
  std::string name;
  bool passed = true;
  std::vector<std::size_t> failing_rows;  // 0-based row indices
};

struct DatasetDiagnostics {
  std::size_t n_rows = 0;
  std::vector<std::pair<std::string, double>> means;
  std::vector<double> availability_frequency;
  std::vector<std::size_t> choice_counts;
  std::vector<InvariantCheck> checks;
  std::vector<std::string> warnings;

  bool ok() const;
};

DatasetDiagnostics validate(const SurveyDataset& dataset);
std::string format_diagnostics(const DatasetDiagnostics& diagnostics);

}  // namespace rbmchoice
