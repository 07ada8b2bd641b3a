#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rbmchoice/crbm.hpp"
#include "rbmchoice/iclv.hpp"
#include "rbmchoice/mnl.hpp"

namespace rbmchoice {

/// Versioned plain-text parameter file:
///
///   rbmchoice-params 1
///   model <crbm|mnl|iclv>
///   option <key> <value...>        (zero or more)
///   block <name> <rows> <cols>     (one per matrix, in flat-layout order)
///   mask
///   <0/1 per flat parameter>
///   values
///   <one line per matrix row, shortest round-trip decimal>
///
/// Doubles are written with enough digits to reload bit-exactly.
struct ParamFile {
  struct Block {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
  };

  std::string model;
  std::vector<std::pair<std::string, std::string>> options;
  std::vector<Block> blocks;
  std::vector<bool> fixed;
  Eigen::VectorXd values;

  const std::string* option(const std::string& key) const;
  std::vector<std::string> option_all(const std::string& key) const;
  const Block& block(const std::string& name) const;
  std::size_t block_offset(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;

  std::string serialize() const;
  static ParamFile parse(const std::string& text);
};

inline constexpr int kParamFormatVersion = 1;

ParamFile to_param_file(const CRBMParams& params);
ParamFile to_param_file(const ChoiceModelParams& params);
ParamFile to_param_file(const IclvParams& params);

CRBMParams crbm_from_param_file(const ParamFile& file);
ChoiceModelParams mnl_from_param_file(const ParamFile& file);
IclvParams iclv_from_param_file(const ParamFile& file);

void write_param_file(const ParamFile& file, const std::filesystem::path& path);
ParamFile read_param_file(const std::filesystem::path& path);

}  // namespace rbmchoice
