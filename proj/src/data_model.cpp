#include "rbmchoice/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "text_util.hpp"

namespace rbmchoice {

namespace {

std::optional<std::size_t> find_name(const std::vector<std::string>& names, const std::string& name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == ".";
}

}  // namespace

std::optional<std::size_t> VariableCatalog::alternative_index(const std::string& name) const {
  return find_name(alternatives, name);
}
std::optional<std::size_t> VariableCatalog::attribute_index(const std::string& name) const {
  return find_name(alt_specific_vars, name);
}
std::optional<std::size_t> VariableCatalog::generic_index(const std::string& name) const {
  return find_name(generic_vars, name);
}
std::optional<std::size_t> VariableCatalog::indicator_index(const std::string& name) const {
  for (std::size_t j = 0; j < indicator_vars.size(); ++j)
    if (indicator_vars[j].name == name) return j;
  return std::nullopt;
}

void VariableCatalog::check() const {
  if (alternatives.size() < 2) throw std::invalid_argument("catalog needs at least 2 alternatives");
  if (reference >= alternatives.size())
    throw std::invalid_argument("reference alternative index out of range");
  std::set<std::string> alts(alternatives.begin(), alternatives.end());
  if (alts.size() != alternatives.size())
    throw std::invalid_argument("duplicate alternative identifier");
  std::set<std::string> seen;
  auto claim = [&](const std::string& n) {
    if (n.empty()) throw std::invalid_argument("empty variable name");
    if (!seen.insert(n).second)
      throw std::invalid_argument("variable '" + n + "' appears in more than one category");
  };
  for (const auto& v : alt_specific_vars) claim(v);
  for (const auto& v : generic_vars) claim(v);
  for (const auto& v : indicator_vars) {
    claim(v.name);
    if (!v.alternative.empty() && !alts.contains(v.alternative))
      throw std::invalid_argument("indicator '" + v.name + "' refers to unknown alternative '" +
                                  v.alternative + "'");
  }
}

std::size_t ObservationRow::n_available() const {
  return static_cast<std::size_t>(std::count(availability.begin(), availability.end(), 1));
}

bool SurveyDataset::has_indicators() const {
  return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.indicators.has_value(); });
}

DataError::DataError(const std::string& what, std::size_t row)
    : std::runtime_error(row == 0 ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}

int binarize_likert(int response, bool flip) {
  if (response < 1 || response > 5)
    throw std::out_of_range("Likert response " + std::to_string(response) + " outside 1..5");
  const int coded = response <= 3 ? 1 : 0;
  return flip ? 1 - coded : coded;
}

std::vector<int> categorize_continuous(double value, std::span<const double> bin_edges) {
  if (bin_edges.empty()) throw std::invalid_argument("categorize_continuous: empty bin edges");
  if (!std::is_sorted(bin_edges.begin(), bin_edges.end()))
    throw std::invalid_argument("categorize_continuous: bin edges must be ascending");
  std::vector<int> out(bin_edges.size() + 1, 0);
  // Number of edges <= value is the bin index (left-closed bins).
  auto bin = std::upper_bound(bin_edges.begin(), bin_edges.end(), value) - bin_edges.begin();
  out[static_cast<std::size_t>(bin)] = 1;
  return out;
}

SurveyDataset load_dataset(const std::filesystem::path& path, const VariableCatalog& catalog,
                           const LoadOptions& options) {
  catalog.check();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path.string() + "'");

  const std::size_t I = catalog.n_alternatives();
  const std::size_t K = catalog.n_attributes();
  const std::size_t M = catalog.n_generic();
  const std::size_t J = catalog.n_indicators();

  std::vector<double> scale = options.scale_factors;
  if (scale.empty()) scale.assign(K, 1.0);
  if (scale.size() != K) throw DataError("scale factor count does not match attribute count");
  for (double s : scale)
    if (!(s > 0.0)) throw DataError("scale factors must be strictly positive");

  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty");
  const auto header = detail::split(line, options.delimiter);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) column[header[c]] = c;

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = column.find(name);
    if (it == column.end()) throw DataError("missing column '" + name + "'");
    return it->second;
  };

  const std::size_t choice_col = require("choice");

  std::vector<std::optional<std::size_t>> av_cols(I);
  std::size_t n_av = 0;
  for (std::size_t i = 0; i < I; ++i) {
    auto it = column.find("av_" + catalog.alternatives[i]);
    if (it != column.end()) {
      av_cols[i] = it->second;
      ++n_av;
    }
  }
  if (n_av != 0 && n_av != I) {
    for (std::size_t i = 0; i < I; ++i)
      if (!av_cols[i]) throw DataError("missing column 'av_" + catalog.alternatives[i] + "'");
  }

  std::vector<std::size_t> attr_cols(I * K);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k)
      attr_cols[i * K + k] = require(catalog.alt_specific_vars[k] + "_" + catalog.alternatives[i]);

  // Generic variables come either from their own column or from a binned source.
  std::vector<std::optional<std::size_t>> generic_cols(M);
  struct BinSource {
    std::size_t column;
    const BinnedVariable* spec;
    std::vector<std::size_t> targets;
  };
  std::vector<BinSource> bins;
  std::vector<bool> produced(M, false);
  for (const auto& b : options.binned) {
    if (b.outputs.size() != b.edges.size() + 1)
      throw DataError("binned variable '" + b.source + "' needs edges+1 output names");
    BinSource src{require(b.source), &b, {}};
    for (const auto& o : b.outputs) {
      auto m = catalog.generic_index(o);
      if (!m) throw DataError("binned output '" + o + "' is not a generic variable");
      src.targets.push_back(*m);
      produced[*m] = true;
    }
    bins.push_back(std::move(src));
  }
  for (std::size_t m = 0; m < M; ++m)
    if (!produced[m]) generic_cols[m] = require(catalog.generic_vars[m]);

  std::vector<std::size_t> ind_cols(J);
  for (std::size_t j = 0; j < J; ++j) ind_cols[j] = require(catalog.indicator_vars[j].name);

  SurveyDataset ds;
  ds.catalog = catalog;
  ds.scale_factors = scale;

  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row_no;
    const auto cells = detail::split(line, options.delimiter);
    if (cells.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " cells, found " +
                          std::to_string(cells.size()),
                      row_no);
    auto number = [&](std::size_t col) -> double {
      auto v = detail::parse_double(cells[col]);
      if (!v) throw DataError("non-numeric cell '" + cells[col] + "' in column '" + header[col] + "'", row_no);
      return *v;
    };

    ObservationRow row;
    row.availability.assign(I, 1);
    for (std::size_t i = 0; i < I; ++i) {
      if (!av_cols[i]) continue;
      const double a = number(*av_cols[i]);
      if (a != 0.0 && a != 1.0) throw DataError("availability must be 0 or 1", row_no);
      row.availability[i] = static_cast<std::uint8_t>(a);
    }

    row.alt_attributes.resize(static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        const auto col = attr_cols[i * K + k];
        double v = 0.0;
        if (!(row.availability[i] == 0 && is_missing(cells[col]))) v = number(col) * scale[k];
        row.alt_attributes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
      }

    row.generic = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
    for (std::size_t m = 0; m < M; ++m) {
      if (!generic_cols[m]) continue;
      const double v = number(*generic_cols[m]);
      if (v != 0.0 && v != 1.0)
        throw DataError("generic variable '" + catalog.generic_vars[m] + "' must be 0 or 1", row_no);
      row.generic[static_cast<Eigen::Index>(m)] = v;
    }
    for (const auto& b : bins) {
      const auto onehot = categorize_continuous(number(b.column), b.spec->edges);
      for (std::size_t q = 0; q < onehot.size(); ++q)
        row.generic[static_cast<Eigen::Index>(b.targets[q])] = onehot[q];
    }

    if (J > 0) {
      std::size_t missing = 0;
      for (auto c : ind_cols) missing += is_missing(cells[c]) ? 1 : 0;
      if (missing != 0 && missing != J)
        throw DataError("indicators must be all present or all missing", row_no);
      if (missing == 0) {
        Eigen::VectorXd ind(static_cast<Eigen::Index>(J));
        for (std::size_t j = 0; j < J; ++j) {
          const double v = number(ind_cols[j]);
          if (options.indicator_coding == IndicatorCoding::likert5) {
            if (v != std::floor(v) || v < 1 || v > 5)
              throw DataError("Likert response must be an integer in 1..5", row_no);
            ind[static_cast<Eigen::Index>(j)] = binarize_likert(static_cast<int>(v), options.likert_flip);
          } else {
            if (v != 0.0 && v != 1.0) throw DataError("indicator must be 0 or 1", row_no);
            ind[static_cast<Eigen::Index>(j)] = v;
          }
        }
        row.indicators = std::move(ind);
      }
    }

    const std::string& choice_cell = cells[choice_col];
    std::optional<std::size_t> choice = catalog.alternative_index(choice_cell);
    if (!choice) {
      std::size_t idx = 0;
      auto [p, ec] = std::from_chars(choice_cell.data(), choice_cell.data() + choice_cell.size(), idx);
      if (ec != std::errc{} || p != choice_cell.data() + choice_cell.size())
        throw DataError("choice '" + choice_cell + "' is neither an alternative name nor an index", row_no);
      choice = idx;
    }
    if (*choice >= I) throw DataError("choice index " + choice_cell + " out of range", row_no);
    if (row.availability[*choice] == 0)
      throw DataError("chosen alternative '" + catalog.alternatives[*choice] + "' is unavailable", row_no);
    row.choice = *choice;
    if (row.n_available() < 2) throw DataError("fewer than 2 alternatives available", row_no);

    ds.rows.push_back(std::move(row));
  }
  return ds;
}

void write_dataset(const SurveyDataset& ds, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file '" + path.string() + "'");
  write_dataset(ds, out, delimiter);
}

void write_dataset(const SurveyDataset& ds, std::ostream& out, char delimiter) {
  const auto& cat = ds.catalog;
  const std::size_t I = cat.n_alternatives();
  const std::size_t K = cat.n_attributes();
  std::vector<std::string> head{"choice"};
  for (const auto& a : cat.alternatives) head.push_back("av_" + a);
  for (const auto& a : cat.alternatives)
    for (const auto& v : cat.alt_specific_vars) head.push_back(v + "_" + a);
  for (const auto& g : cat.generic_vars) head.push_back(g);
  for (const auto& ind : cat.indicator_vars) head.push_back(ind.name);
  out << detail::join(head, delimiter) << '\n';

  for (const auto& row : ds.rows) {
    std::vector<std::string> cells;
    cells.push_back(std::to_string(row.choice));
    for (std::size_t i = 0; i < I; ++i) cells.push_back(std::to_string(int{row.availability[i]}));
    for (std::size_t i = 0; i < I; ++i)
      for (std::size_t k = 0; k < K; ++k)
        cells.push_back(detail::format_double(
            row.alt_attributes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))));
    for (Eigen::Index m = 0; m < row.generic.size(); ++m) cells.push_back(detail::format_double(row.generic[m]));
    for (std::size_t j = 0; j < cat.n_indicators(); ++j)
      cells.push_back(row.indicators ? detail::format_double((*row.indicators)[static_cast<Eigen::Index>(j)])
                                     : std::string{});
    out << detail::join(cells, delimiter) << '\n';
  }
}

bool DatasetDiagnostics::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

DatasetDiagnostics validate(const SurveyDataset& ds) {
  DatasetDiagnostics d;
  const auto& cat = ds.catalog;
  const std::size_t I = cat.n_alternatives();
  const std::size_t K = cat.n_attributes();
  const std::size_t M = cat.n_generic();
  const std::size_t J = cat.n_indicators();
  d.n_rows = ds.rows.size();

  InvariantCheck dims{"dimensions match catalog", true, {}};
  InvariantCheck choice_ok{"choice indexes an available alternative", true, {}};
  InvariantCheck generic_ok{"generic values are 0 or 1", true, {}};
  InvariantCheck indicator_ok{"indicator values are 0 or 1", true, {}};
  InvariantCheck avail_ok{"at least 2 alternatives available", true, {}};
  InvariantCheck scale_ok{"scale factors strictly positive", true, {}};

  for (double s : ds.scale_factors)
    if (!(s > 0.0)) scale_ok.passed = false;
  if (!ds.scale_factors.empty() && ds.scale_factors.size() != K) scale_ok.passed = false;

  std::vector<double> attr_sum(I * K, 0.0);
  std::vector<std::size_t> attr_n(I, 0);
  std::vector<double> gen_sum(M, 0.0);
  std::vector<double> ind_sum(J, 0.0);
  std::size_t ind_rows = 0;
  d.availability_frequency.assign(I, 0.0);
  d.choice_counts.assign(I, 0);

  auto fail = [](InvariantCheck& c, std::size_t r) {
    c.passed = false;
    c.failing_rows.push_back(r);
  };

  for (std::size_t r = 0; r < ds.rows.size(); ++r) {
    const auto& row = ds.rows[r];
    const bool shape_ok = row.availability.size() == I &&
                          row.alt_attributes.rows() == static_cast<Eigen::Index>(I) &&
                          row.alt_attributes.cols() == static_cast<Eigen::Index>(K) &&
                          row.generic.size() == static_cast<Eigen::Index>(M) &&
                          (!row.indicators || row.indicators->size() == static_cast<Eigen::Index>(J));
    if (!shape_ok) {
      fail(dims, r);
      continue;
    }
    if (row.choice >= I || row.availability[row.choice] != 1)
      fail(choice_ok, r);
    else
      ++d.choice_counts[row.choice];
    if (row.n_available() < 2) fail(avail_ok, r);
    for (std::size_t i = 0; i < I; ++i) {
      d.availability_frequency[i] += row.availability[i];
      if (!row.availability[i]) continue;
      ++attr_n[i];
      for (std::size_t k = 0; k < K; ++k)
        attr_sum[i * K + k] += row.alt_attributes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
    bool gen_bad = false;
    for (std::size_t m = 0; m < M; ++m) {
      const double v = row.generic[static_cast<Eigen::Index>(m)];
      if (v != 0.0 && v != 1.0) gen_bad = true;
      gen_sum[m] += v;
    }
    if (gen_bad) fail(generic_ok, r);
    if (row.indicators) {
      ++ind_rows;
      bool bad = false;
      for (std::size_t j = 0; j < J; ++j) {
        const double v = (*row.indicators)[static_cast<Eigen::Index>(j)];
        if (v != 0.0 && v != 1.0) bad = true;
        ind_sum[j] += v;
      }
      if (bad) fail(indicator_ok, r);
    }
  }

  const double n = static_cast<double>(std::max<std::size_t>(d.n_rows, 1));
  for (auto& f : d.availability_frequency) f /= n;
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k)
      d.means.emplace_back(cat.alt_specific_vars[k] + "_" + cat.alternatives[i],
                           attr_n[i] ? attr_sum[i * K + k] / static_cast<double>(attr_n[i]) : 0.0);
  for (std::size_t m = 0; m < M; ++m) d.means.emplace_back(cat.generic_vars[m], gen_sum[m] / n);
  for (std::size_t j = 0; j < J; ++j)
    d.means.emplace_back(cat.indicator_vars[j].name,
                         ind_rows ? ind_sum[j] / static_cast<double>(ind_rows) : 0.0);

  d.checks = {dims, choice_ok, generic_ok, indicator_ok, avail_ok, scale_ok};
  for (std::size_t i = 0; i < I; ++i)
    if (d.choice_counts[i] == 0 && d.n_rows > 0)
      d.warnings.push_back("alternative '" + cat.alternatives[i] + "' is never chosen");
  if (J > 0 && ind_rows < d.n_rows)
    d.warnings.push_back(std::to_string(d.n_rows - ind_rows) + " rows have no indicator responses");
  return d;
}

std::string format_diagnostics(const DatasetDiagnostics& d) {
  std::ostringstream os;
  os << "rows: " << d.n_rows << '\n';
  os << "invariants:\n";
  for (const auto& c : d.checks) {
    os << "  [" << (c.passed ? "pass" : "FAIL") << "] " << c.name;
    if (!c.passed && !c.failing_rows.empty()) {
      os << " (rows";
      for (std::size_t q = 0; q < std::min<std::size_t>(c.failing_rows.size(), 10); ++q)
        os << ' ' << c.failing_rows[q] + 1;
      if (c.failing_rows.size() > 10) os << " ...";
      os << ')';
    }
    os << '\n';
  }
  os << "choice counts:";
  for (auto c : d.choice_counts) os << ' ' << c;
  os << "\navailability:";
  for (auto a : d.availability_frequency) os << ' ' << detail::format_fixed(a, 3);
  os << "\nmeans:\n";
  for (const auto& [name, mean] : d.means) os << "  " << name << ' ' << detail::format_fixed(mean, 4) << '\n';
  for (const auto& w : d.warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace rbmchoice
