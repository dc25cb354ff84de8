#pragma once

// Run configuration in INI form:
//
//   [model]   blocks heads d_model d_ffn dropout max_positions tied_embeddings
//   [train]   seed lr lr_init warmup beta1 beta2 adam_eps weight_decay epochs
//             max_tokens avg_last_k label_smoothing lambda1 lambda2
//             consistency decoder_input bpe_merges
//   [filter]  alpha1 alpha2 sim_threshold mu
//   [augment] strategy drop_p sub_p lexicon
//   [decode]  beam length_penalty max_len_factor max_len_const max_len
//   [paths]   train_src train_tgt valid_src valid_tgt test_src test_tgt
//             augmented vectors codes run_dir
//
// Unknown sections or keys and unparsable values raise ConfigError naming
// "section.key".

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ssnmt/augment.hpp"
#include "ssnmt/decode.hpp"
#include "ssnmt/filter.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/trainer.hpp"

namespace ssnmt {

struct PathsConfig {
  std::string train_src;
  std::string train_tgt;
  std::string valid_src;
  std::string valid_tgt;
  std::string test_src;
  std::string test_tgt;
  std::string augmented;  // filtered "x<TAB>u<TAB>y" file
  std::string vectors;
  std::string codes;      // learned BPE table; learned from train data when empty
  std::string run_dir;
};

struct RunConfig {
  TransformerConfig model;
  TrainConfig train;
  FilterConfig filter;
  AugmentConfig augment;
  DecodeConfig decode;
  std::size_t bpe_merges = 3000;
  PathsConfig paths;

  // Copies the shared seed and mu into the module configs, then validates each.
  void finalize();
};

struct ConfigField {
  std::string section;
  std::string key;
  std::string flag;   // command-line spelling, without dashes
  std::string help;
  std::string paper;  // empty when the paper gives no value
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;

  std::string name() const { return section + "." + key; }
};

const std::vector<ConfigField>& config_fields();
const ConfigField& config_field(std::string_view name);

RunConfig parse_run_config(std::string_view ini);
RunConfig load_run_config(const std::filesystem::path& path);
// Every field, grouped by section, in registry order.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace ssnmt
