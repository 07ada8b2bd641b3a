#include "rbmchoice/param_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "text_util.hpp"

namespace rbmchoice {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

constexpr const char* kMagic = "rbmchoice-params";

std::vector<std::string> words(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::runtime_error("parameter file: bad " + what + " '" + s + "'");
  return v;
}

void add_block(ParamFile& f, std::string name, std::size_t rows, std::size_t cols) {
  f.blocks.push_back({std::move(name), rows, cols});
}

void add_choice_blocks(ParamFile& f, const ChoiceModelParams& p) {
  add_block(f, "asc", p.n_alternatives(), 1);
  add_block(f, "beta_attr", p.n_attributes(), 1);
  add_block(f, "beta_generic", p.n_alternatives(), p.n_generic());
  add_block(f, "beta_latent", p.n_alternatives(), p.n_latents());
}

std::size_t parse_reference(const ParamFile& f) {
  const auto* r = f.option("reference");
  if (!r) throw std::runtime_error("parameter file: missing option 'reference'");
  return parse_size(*r, "reference");
}

ChoiceModelParams choice_from(const ParamFile& f) {
  ChoiceModelParams p;
  p.asc = f.matrix("asc").col(0);
  p.beta_attr = f.block("beta_attr").rows ? Eigen::VectorXd(f.matrix("beta_attr").col(0)) : Eigen::VectorXd();
  p.beta_generic = f.matrix("beta_generic");
  p.beta_latent = f.matrix("beta_latent");
  p.reference = parse_reference(f);
  const std::size_t n = p.size();
  p.fixed.assign(f.fixed.begin(), f.fixed.begin() + static_cast<std::ptrdiff_t>(n));
  return p;
}

std::string bool_word(bool b) { return b ? "1" : "0"; }

bool parse_bool_word(const std::string& s) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw std::runtime_error("parameter file: expected 0 or 1, got '" + s + "'");
}

}  // namespace

const std::string* ParamFile::option(const std::string& key) const {
  for (const auto& [k, v] : options)
    if (k == key) return &v;
  return nullptr;
}

std::vector<std::string> ParamFile::option_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : options)
    if (k == key) out.push_back(v);
  return out;
}

const ParamFile::Block& ParamFile::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw std::runtime_error("parameter file: missing block '" + name + "'");
}

std::size_t ParamFile::block_offset(const std::string& name) const {
  std::size_t off = 0;
  for (const auto& b : blocks) {
    if (b.name == name) return off;
    off += b.rows * b.cols;
  }
  throw std::runtime_error("parameter file: missing block '" + name + "'");
}

Eigen::MatrixXd ParamFile::matrix(const std::string& name) const {
  const auto& b = block(name);
  const std::size_t off = block_offset(name);
  Eigen::MatrixXd m(ix(b.rows), ix(b.cols));
  for (std::size_t r = 0; r < b.rows; ++r)
    for (std::size_t c = 0; c < b.cols; ++c) m(ix(r), ix(c)) = values[ix(off + r * b.cols + c)];
  return m;
}

std::string ParamFile::serialize() const {
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.rows * b.cols;
  if (total != static_cast<std::size_t>(values.size()) || total != fixed.size())
    throw std::logic_error("ParamFile: blocks, mask and values disagree in size");
  std::string out = std::string(kMagic) + " " + std::to_string(kParamFormatVersion) + "\n";
  out += "model " + model + "\n";
  for (const auto& [k, v] : options) out += "option " + k + " " + v + "\n";
  for (const auto& b : blocks) out += "block " + b.name + " " + std::to_string(b.rows) + " " + std::to_string(b.cols) + "\n";
  out += "mask\n";
  std::size_t off = 0;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < b.rows; ++r) {
      if (b.cols == 0) continue;
      for (std::size_t c = 0; c < b.cols; ++c) out += (c ? " " : "") + bool_word(fixed[off + r * b.cols + c]);
      out += "\n";
    }
    off += b.rows * b.cols;
  }
  out += "values\n";
  off = 0;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < b.rows; ++r) {
      if (b.cols == 0) continue;
      for (std::size_t c = 0; c < b.cols; ++c)
        out += (c ? " " : "") + detail::format_double(values[ix(off + r * b.cols + c)]);
      out += "\n";
    }
    off += b.rows * b.cols;
  }
  return out;
}

ParamFile ParamFile::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parameter file is empty");
  auto head = words(line);
  if (head.size() != 2 || head[0] != kMagic) throw std::runtime_error("not a parameter file (bad header)");
  if (parse_size(head[1], "version") != static_cast<std::size_t>(kParamFormatVersion))
    throw std::runtime_error("unsupported parameter file version " + head[1]);

  ParamFile f;
  enum class Section { header, mask, values } section = Section::header;
  std::vector<std::string> mask_tokens, value_tokens;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (section == Section::header) {
      auto w = words(t);
      if (w[0] == "model" && w.size() == 2) {
        f.model = w[1];
      } else if (w[0] == "option" && w.size() >= 2) {
        const auto key_end = t.find(w[1]) + w[1].size();
        f.options.emplace_back(w[1], detail::trim(t.substr(key_end)));
      } else if (w[0] == "block" && w.size() == 4) {
        add_block(f, w[1], parse_size(w[2], "rows"), parse_size(w[3], "cols"));
      } else if (t == "mask") {
        section = Section::mask;
      } else {
        throw std::runtime_error("parameter file: unexpected line '" + t + "'");
      }
    } else if (t == "values") {
      section = Section::values;
    } else {
      auto w = words(t);
      auto& dst = section == Section::mask ? mask_tokens : value_tokens;
      dst.insert(dst.end(), w.begin(), w.end());
    }
  }
  if (section != Section::values) throw std::runtime_error("parameter file: missing mask or values section");
  std::size_t total = 0;
  for (const auto& b : f.blocks) total += b.rows * b.cols;
  if (mask_tokens.size() != total || value_tokens.size() != total)
    throw std::runtime_error("parameter file: expected " + std::to_string(total) + " mask and value entries");
  f.values.resize(ix(total));
  for (std::size_t q = 0; q < total; ++q) {
    f.fixed.push_back(parse_bool_word(mask_tokens[q]));
    auto v = detail::parse_double(value_tokens[q]);
    if (!v) throw std::runtime_error("parameter file: bad value '" + value_tokens[q] + "'");
    f.values[ix(q)] = *v;
  }
  return f;
}

ParamFile to_param_file(const CRBMParams& p) {
  p.check();
  ParamFile f;
  f.model = "crbm";
  f.options.emplace_back("reference", std::to_string(p.reference));
  f.options.emplace_back("g_term", to_string(p.g_term));
  add_block(f, "c_alt", p.n_alternatives(), 1);
  add_block(f, "c_lat", p.n_latents(), 1);
  add_block(f, "D", p.n_alternatives(), p.n_latents());
  add_block(f, "B", p.n_alternatives(), p.n_attributes());
  add_block(f, "G", p.n_latents(), p.n_generic());
  f.fixed = p.fixed;
  f.values = p.to_vector();
  return f;
}

ParamFile to_param_file(const ChoiceModelParams& p) {
  ParamFile f;
  f.model = "mnl";
  f.options.emplace_back("reference", std::to_string(p.reference));
  add_choice_blocks(f, p);
  f.fixed = p.fixed;
  f.values = p.to_vector();
  return f;
}

ParamFile to_param_file(const IclvParams& p) {
  ParamFile f;
  f.model = "iclv";
  f.options.emplace_back("reference", std::to_string(p.choice.reference));
  f.options.emplace_back("sign", to_string(p.sign));
  for (const auto& l : p.latents) {
    f.options.emplace_back("latent", l.name + " " + to_string(l.function) + " " + detail::format_double(l.noise_std) +
                                         " " + bool_word(l.fix_intercept) + " " + detail::join(l.inputs, ','));
  }
  for (const auto& m : p.measurement) f.options.emplace_back("measurement", m.indicator + " " + m.latent);
  add_choice_blocks(f, p.choice);
  for (const auto& l : p.latents) add_block(f, "structural." + l.name, 1, l.inputs.size() + 1);
  add_block(f, "measurement", p.measurement.size(), 1);
  f.fixed = p.fixed_mask();
  f.values = p.to_vector();
  return f;
}

CRBMParams crbm_from_param_file(const ParamFile& f) {
  if (f.model != "crbm") throw std::runtime_error("parameter file holds a '" + f.model + "' model, expected crbm");
  CRBMParams p;
  p.c_alt = f.matrix("c_alt").col(0);
  p.c_lat = f.block("c_lat").rows ? Eigen::VectorXd(f.matrix("c_lat").col(0)) : Eigen::VectorXd();
  p.D = f.matrix("D");
  p.B = f.matrix("B");
  p.G = f.matrix("G");
  p.reference = parse_reference(f);
  if (const auto* g = f.option("g_term")) p.g_term = parse_g_term(*g);
  p.fixed = f.fixed;
  p.check();
  return p;
}

ChoiceModelParams mnl_from_param_file(const ParamFile& f) {
  if (f.model != "mnl") throw std::runtime_error("parameter file holds a '" + f.model + "' model, expected mnl");
  return choice_from(f);
}

IclvParams iclv_from_param_file(const ParamFile& f) {
  if (f.model != "iclv") throw std::runtime_error("parameter file holds a '" + f.model + "' model, expected iclv");
  IclvParams p;
  p.choice = choice_from(f);
  if (const auto* s = f.option("sign")) p.sign = parse_measurement_sign(*s);
  for (const auto& text : f.option_all("latent")) {
    auto w = words(text);
    if (w.size() != 5) throw std::runtime_error("parameter file: bad latent option '" + text + "'");
    LatentSpec l;
    l.name = w[0];
    l.function = parse_latent_function(w[1]);
    l.noise_std = detail::parse_double(w[2]).value_or(-1.0);
    l.fix_intercept = parse_bool_word(w[3]);
    l.inputs = detail::split(w[4], ',');
    const auto s = f.matrix("structural." + l.name);
    if (static_cast<std::size_t>(s.cols()) != l.inputs.size() + 1)
      throw std::runtime_error("parameter file: structural block of '" + l.name + "' has wrong width");
    l.loadings = s.row(0).head(ix(l.inputs.size())).transpose();
    l.intercept = s(0, ix(l.inputs.size()));
    p.latents.push_back(std::move(l));
  }
  const auto meas = f.option_all("measurement");
  const auto loadings = f.matrix("measurement");
  if (static_cast<std::size_t>(loadings.rows()) != meas.size())
    throw std::runtime_error("parameter file: measurement block and options disagree");
  const std::size_t moff = f.block_offset("measurement");
  for (std::size_t q = 0; q < meas.size(); ++q) {
    auto w = words(meas[q]);
    if (w.size() != 2) throw std::runtime_error("parameter file: bad measurement option '" + meas[q] + "'");
    p.measurement.push_back({w[0], w[1], loadings(ix(q), 0), static_cast<bool>(f.fixed[moff + q])});
  }
  for (std::size_t h = 0; h < p.latents.size(); ++h)
    p.latents[h].fix_intercept = f.fixed[p.structural_offset(h) + p.latents[h].inputs.size()];
  if (p.fixed_mask() != f.fixed) throw std::runtime_error("parameter file: mask not representable for an ICLV model");
  return p;
}

void write_param_file(const ParamFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << file.serialize();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ParamFile read_param_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParamFile::parse(buf.str());
}

}  // namespace rbmchoice
