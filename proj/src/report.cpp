#include <algorithm>
#include <stdexcept>

#include "json.hpp"

#include "rbmchoice/pipeline.hpp"
#include "text_util.hpp"

namespace rbmchoice {

namespace {

using nlohmann::json;
using detail::format_fixed;

bool is_latent_row(const std::string& name) {
  return name.rfind("LV_", 0) == 0 || name.rfind("MI_", 0) == 0 || name.find('.') != std::string::npos;
}

/// Fixed non-reference parameters sitting at zero are excluded terms, not estimates.
bool shown(const ParamStat& s) { return s.reference || !s.fixed || s.value != 0.0; }

std::vector<std::string> row_names(const ComparisonReport& r, bool latent_section) {
  std::vector<std::string> out;
  for (const auto& m : r.models)
    for (const auto& s : m.table)
      if (shown(s) && is_latent_row(s.name) == latent_section && std::find(out.begin(), out.end(), s.name) == out.end())
        out.push_back(s.name);
  return out;
}

const ParamStat* find(const ModelColumn& m, const std::string& name) {
  for (const auto& s : m.table)
    if (s.name == name) return &s;
  return nullptr;
}

struct Cells {
  std::string value, std_err, t;
};

Cells cells(const ParamStat* s) {
  if (!s) return {"", "", ""};
  if (s->reference) return {"0 (ref.)", "-", "-"};
  Cells c{format_fixed(s->value, 3), "-", "-"};
  if (s->fixed) return c;
  if (s->flagged || !s->std_err) return {c.value, "n/a", "n/a"};
  c.std_err = format_fixed(*s->std_err, 3);
  c.t = s->t ? format_fixed(*s->t, 3) : "-";
  return c;
}

struct StatRow {
  std::string label;
  std::string (*value)(const ModelColumn&);
};

const std::vector<StatRow>& stat_rows() {
  static const std::vector<StatRow> rows = {
      {"Null Loglikelihood", [](const ModelColumn& m) { return format_fixed(m.stats.null_ll, 3); }},
      {"Final Loglikelihood", [](const ModelColumn& m) { return format_fixed(m.stats.final_ll, 3); }},
      {"rho square", [](const ModelColumn& m) { return format_fixed(m.stats.rho_square, 3); }},
      {"AIC", [](const ModelColumn& m) { return format_fixed(m.stats.aic, 3); }},
      {"BIC", [](const ModelColumn& m) { return format_fixed(m.stats.bic, 3); }},
      {"Free parameters", [](const ModelColumn& m) { return std::to_string(m.stats.n_params); }},
      {"Observations", [](const ModelColumn& m) { return std::to_string(m.stats.n_obs); }},
      {"Converged", [](const ModelColumn& m) { return std::string(m.converged ? "yes" : "no"); }},
  };
  return rows;
}

struct DeltaRow {
  std::string label;
  double (*value)(const FitStatistics&);
};

const std::vector<DeltaRow>& delta_rows() {
  static const std::vector<DeltaRow> rows = {
      {"Final Loglikelihood", [](const FitStatistics& s) { return s.final_ll; }},
      {"AIC", [](const FitStatistics& s) { return s.aic; }},
      {"BIC", [](const FitStatistics& s) { return s.bic; }},
  };
  return rows;
}

std::string signed_fixed(double v) {
  std::string s = format_fixed(v, 3);
  return s.front() == '-' ? s : "+" + s;
}

std::string pad(const std::string& s, std::size_t w, bool right) {
  if (s.size() >= w) return s;
  return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

std::string render_text(const ComparisonReport& r) {
  constexpr std::size_t kCell = 11;
  std::size_t name_w = 22;
  for (bool sec : {false, true})
    for (const auto& n : row_names(r, sec)) name_w = std::max(name_w, n.size() + 2);
  const std::size_t model_w = 3 * kCell;
  const std::size_t width = name_w + r.models.size() * model_w;
  const std::string rule(width, '-');

  std::string out;
  if (!r.title.empty()) out += r.title + "\n";
  out += rule + "\n";
  std::string line = pad("", name_w, false);
  for (const auto& m : r.models) line += pad(m.label, model_w, true);
  out += line + "\n";
  line = pad("Parameters", name_w, false);
  for (std::size_t k = 0; k < r.models.size(); ++k)
    line += pad("value", kCell, true) + pad("std. err.", kCell, true) + pad("t-test", kCell, true);
  out += line + "\n" + rule + "\n";

  auto param_block = [&](const std::vector<std::string>& names) {
    for (const auto& n : names) {
      std::string l = pad(n, name_w, false);
      for (const auto& m : r.models) {
        const auto c = cells(find(m, n));
        l += pad(c.value, kCell, true) + pad(c.std_err, kCell, true) + pad(c.t, kCell, true);
      }
      while (!l.empty() && l.back() == ' ') l.pop_back();
      out += l + "\n";
    }
  };
  param_block(row_names(r, false));
  const auto latent = row_names(r, true);
  if (!latent.empty()) {
    out += rule + "\nLatent and measurement parameters\n";
    param_block(latent);
  }
  out += rule + "\nModel statistics\n";
  for (const auto& s : stat_rows()) {
    std::string l = pad(s.label, name_w, false);
    for (const auto& m : r.models) l += pad(s.value(m), model_w, true);
    out += l + "\n";
  }
  if (r.models.size() > 1) {
    out += rule + "\nDifferences from " + r.models.front().label + "\n";
    for (const auto& d : delta_rows()) {
      std::string l = pad(d.label, name_w, false) + pad("", model_w, true);
      for (std::size_t k = 1; k < r.models.size(); ++k)
        l += pad(signed_fixed(d.value(r.models[k].stats) - d.value(r.models.front().stats)), model_w, true);
      out += l + "\n";
    }
  }
  out += rule + "\n";
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string render_delimited(const ComparisonReport& r) {
  std::vector<std::string> head{"section", "parameter"};
  for (const auto& m : r.models)
    for (const char* col : {"value", "std_err", "t"}) head.push_back(csv_field(m.label + " " + col));
  std::string out = detail::join(head, ',') + "\n";
  auto params = [&](const char* section, const std::vector<std::string>& names) {
    for (const auto& n : names) {
      std::vector<std::string> f{section, csv_field(n)};
      for (const auto& m : r.models) {
        const auto c = cells(find(m, n));
        f.insert(f.end(), {csv_field(c.value), c.std_err, c.t});
      }
      out += detail::join(f, ',') + "\n";
    }
  };
  params("choice", row_names(r, false));
  params("latent", row_names(r, true));
  for (const auto& s : stat_rows()) {
    std::vector<std::string> f{"statistics", s.label};
    for (const auto& m : r.models) f.insert(f.end(), {s.value(m), "", ""});
    out += detail::join(f, ',') + "\n";
  }
  return out;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string render_json(const ComparisonReport& r) {
  json j;
  j["format"] = "rbmchoice-report";
  j["version"] = 1;
  j["title"] = r.title;
  j["models"] = json::array();
  for (const auto& m : r.models) {
    json jm;
    jm["label"] = m.label;
    jm["converged"] = m.converged;
    jm["statistics"] = {{"null_ll", m.stats.null_ll}, {"final_ll", m.stats.final_ll},
                        {"rho_square", m.stats.rho_square}, {"aic", m.stats.aic},
                        {"bic", m.stats.bic}, {"n_params", m.stats.n_params},
                        {"n_obs", m.stats.n_obs}};
    jm["parameters"] = json::array();
    for (const auto& s : m.table) {
      jm["parameters"].push_back({{"name", s.name}, {"value", s.value}, {"std_err", opt(s.std_err)},
                                  {"t", opt(s.t)}, {"fixed", s.fixed}, {"reference", s.reference},
                                  {"flagged", s.flagged}});
    }
    j["models"].push_back(std::move(jm));
  }
  return j.dump(2) + "\n";
}

}  // namespace

ComparisonReport single_model_report(const std::string& title, const std::string& label,
                                     const std::vector<ParamStat>& table, const FitStatistics& stats, bool converged) {
  return ComparisonReport{title, {ModelColumn{label, table, stats, converged}}};
}

ComparisonReport make_comparison(const TwoStageResult& r) {
  ComparisonReport rep;
  rep.title = "Latent-behaviour choice model: cold start vs C-RBM initialization";
  if (r.cold_start)
    rep.models.push_back({"ICLV", r.cold_start->table, r.cold_start->stats, r.cold_start->optim.converged});
  rep.models.push_back({"C-RBM init", r.two_stage.table, r.two_stage.stats, r.two_stage.optim.converged});
  return rep;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "text") return ReportFormat::text;
  if (name == "delimited" || name == "csv") return ReportFormat::delimited;
  if (name == "json" || name == "structured") return ReportFormat::json;
  throw std::invalid_argument("unknown report format '" + name + "'");
}

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::text: return "text";
    case ReportFormat::delimited: return "delimited";
    case ReportFormat::json: return "json";
  }
  return "?";
}

std::string report_extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::text: return ".txt";
    case ReportFormat::delimited: return ".csv";
    case ReportFormat::json: return ".json";
  }
  return "";
}

std::string render_report(const ComparisonReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::text: return render_text(report);
    case ReportFormat::delimited: return render_delimited(report);
    case ReportFormat::json: return render_json(report);
  }
  return {};
}

ComparisonReport parse_report_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("report is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "rbmchoice-report") throw std::runtime_error("not an rbmchoice report");
  auto get_opt = [](const json& v) { return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()); };
  try {
    ComparisonReport r;
    r.title = j.at("title").get<std::string>();
    for (const auto& jm : j.at("models")) {
      ModelColumn m;
      m.label = jm.at("label").get<std::string>();
      m.converged = jm.at("converged").get<bool>();
      const auto& st = jm.at("statistics");
      m.stats.null_ll = st.at("null_ll").get<double>();
      m.stats.final_ll = st.at("final_ll").get<double>();
      m.stats.rho_square = st.at("rho_square").get<double>();
      m.stats.aic = st.at("aic").get<double>();
      m.stats.bic = st.at("bic").get<double>();
      m.stats.n_params = st.at("n_params").get<std::size_t>();
      m.stats.n_obs = st.at("n_obs").get<std::size_t>();
      for (const auto& p : jm.at("parameters")) {
        ParamStat s;
        s.name = p.at("name").get<std::string>();
        s.value = p.at("value").get<double>();
        s.std_err = get_opt(p.at("std_err"));
        s.t = get_opt(p.at("t"));
        s.fixed = p.at("fixed").get<bool>();
        s.reference = p.at("reference").get<bool>();
        s.flagged = p.at("flagged").get<bool>();
        m.table.push_back(std::move(s));
      }
      r.models.push_back(std::move(m));
    }
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
}

}  // namespace rbmchoice
