#include "ssnmt/config.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace ssnmt {

namespace {

[[noreturn]] void bad_value(const std::string& name, const std::string& value, std::string_view expected) {
  throw ConfigError(name, fmt::format("{}: invalid value '{}' (expected {})", name, value, expected));
}

std::size_t to_size(const std::string& name, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(name, v, "a non-negative integer");
  return out;
}

double to_double(const std::string& name, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(name, v, "a number");
  return out;
}

bool to_bool(const std::string& name, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(name, v, "true or false");
}

std::string num(double v) { return fmt::format("{}", v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string num(bool v) { return v ? "true" : "false"; }

struct Builder {
  std::vector<ConfigField> fields;
  std::string section;

  template <class T>
  void add(std::string key, std::string flag, std::string help, std::string paper, T RunConfig::*group,
           auto T::*member) {
    add_field(std::move(key), std::move(flag), std::move(help), std::move(paper),
              [group, member](RunConfig& c) -> auto& { return c.*group.*member; });
  }

  template <class Access>
  void add_field(std::string key, std::string flag, std::string help, std::string paper, Access access) {
    ConfigField f;
    f.section = section;
    f.key = key;
    f.flag = std::move(flag);
    f.help = std::move(help);
    f.paper = std::move(paper);
    f.get = [access](const RunConfig& c) { return num(access(const_cast<RunConfig&>(c))); };
    const std::string name = f.name();
    f.set = [access, name](RunConfig& c, const std::string& v) {
      auto& slot = access(c);
      using V = std::remove_reference_t<decltype(slot)>;
      if constexpr (std::is_same_v<V, bool>) slot = to_bool(name, v);
      else if constexpr (std::is_same_v<V, double>) slot = to_double(name, v);
      else slot = static_cast<V>(to_size(name, v));
    };
    fields.push_back(std::move(f));
  }

  void add_text(std::string key, std::string flag, std::string help, std::string PathsConfig::*member) {
    ConfigField f;
    f.section = section;
    f.key = std::move(key);
    f.flag = std::move(flag);
    f.help = std::move(help);
    f.get = [member](const RunConfig& c) { return c.paths.*member; };
    f.set = [member](RunConfig& c, const std::string& v) { c.paths.*member = v; };
    fields.push_back(std::move(f));
  }

  void add_custom(std::string key, std::string flag, std::string help, std::string paper,
                  std::function<std::string(const RunConfig&)> get,
                  std::function<void(RunConfig&, const std::string&)> set) {
    ConfigField f;
    f.section = section;
    f.key = std::move(key);
    f.flag = std::move(flag);
    f.help = std::move(help);
    f.paper = std::move(paper);
    f.get = std::move(get);
    f.set = std::move(set);
    fields.push_back(std::move(f));
  }
};

std::vector<ConfigField> build_fields() {
  Builder b;
  using R = RunConfig;

  b.section = "model";
  b.add("blocks", "blocks", "encoder and decoder blocks", "4", &R::model, &TransformerConfig::num_blocks);
  b.add("heads", "heads", "attention heads", "8", &R::model, &TransformerConfig::num_heads);
  b.add("d_model", "d-model", "embedding width", "1024", &R::model, &TransformerConfig::d_model);
  b.add("d_ffn", "d-ffn", "feed-forward width", "2048", &R::model, &TransformerConfig::d_ffn);
  b.add("dropout", "dropout", "dropout rate", "0.2", &R::model, &TransformerConfig::dropout);
  b.add("max_positions", "max-positions", "longest sequence the position table covers", "", &R::model,
        &TransformerConfig::max_positions);
  b.add("tied_embeddings", "tied-embeddings", "share decoder input and output embeddings", "", &R::model,
        &TransformerConfig::tied_embeddings);

  b.section = "train";
  b.add("seed", "seed", "seed for every random stream", "", &R::train, &TrainConfig::seed);
  b.add("lr", "lr", "peak learning rate", "0.0005", &R::train, &TrainConfig::lr_peak);
  b.add("lr_init", "lr-init", "learning rate at step 0 of warmup", "1e-07", &R::train, &TrainConfig::lr_init);
  b.add("warmup", "warmup", "warmup steps", "", &R::train, &TrainConfig::warmup_steps);
  b.add("beta1", "beta1", "Adam beta1", "0.9", &R::train, &TrainConfig::adam_beta1);
  b.add("beta2", "beta2", "Adam beta2", "0.98", &R::train, &TrainConfig::adam_beta2);
  b.add("adam_eps", "adam-eps", "Adam epsilon", "", &R::train, &TrainConfig::adam_eps);
  b.add("weight_decay", "weight-decay", "decoupled weight decay", "0.0001", &R::train, &TrainConfig::weight_decay);
  b.add("epochs", "epochs", "training epochs", "30", &R::train, &TrainConfig::epochs);
  b.add("max_tokens", "max-tokens", "target tokens per batch", "3000", &R::train, &TrainConfig::max_tokens);
  b.add("avg_last_k", "avg-last-k", "checkpoints averaged into the final model", "10", &R::train,
        &TrainConfig::avg_last_k);
  b.add("label_smoothing", "label-smoothing", "label smoothing epsilon", "0.1", &R::train,
        &TrainConfig::label_smoothing);
  b.add_field("lambda1", "lambda1", "cross-entropy weight", "",
              [](R& c) -> double& { return c.train.weights.lambda1; });
  b.add_field("lambda2", "lambda2", "consistency KL weight", "",
              [](R& c) -> double& { return c.train.weights.lambda2; });
  b.add("consistency", "consistency", "enable the consistency term", "", &R::train, &TrainConfig::consistency);
  b.add_custom(
      "decoder_input", "decoder-input", "consistency decoder input: forced or pseudo", "",
      [](const R& c) { return std::string(c.train.decoder_input == DecoderInput::kForced ? "forced" : "pseudo"); },
      [](R& c, const std::string& v) {
        if (v == "forced") c.train.decoder_input = DecoderInput::kForced;
        else if (v == "pseudo") c.train.decoder_input = DecoderInput::kPseudo;
        else bad_value("train.decoder_input", v, "forced or pseudo");
      });
  b.add_field("bpe_merges", "merges", "BPE merge operations", "3000",
              [](R& c) -> std::size_t& { return c.bpe_merges; });

  b.section = "filter";
  b.add("alpha1", "alpha1", "lowest kept len(x)/len(u)", "0.7", &R::filter, &FilterConfig::alpha1);
  b.add("alpha2", "alpha2", "highest kept len(x)/len(u)", "1.4", &R::filter, &FilterConfig::alpha2);
  b.add("sim_threshold", "sim-threshold", "lowest kept cosine similarity", "0.5", &R::filter,
        &FilterConfig::sim_threshold);
  b.add("mu", "mu", "augmented to labeled mixing ratio", "1", &R::filter, &FilterConfig::mu);

  b.section = "augment";
  b.add_custom(
      "strategy", "strategy", "round_trip, word_dropout, synonym or word_order", "",
      [](const R& c) { return std::string(strategy_name(c.augment.strategy)); },
      [](R& c, const std::string& v) {
        try {
          c.augment.strategy = parse_strategy(v);
        } catch (const ConfigError&) {
          bad_value("augment.strategy", v, "round_trip, word_dropout, synonym or word_order");
        }
      });
  b.add("drop_p", "drop-p", "word dropout probability", "0.2", &R::augment, &AugmentConfig::drop_p);
  b.add("sub_p", "sub-p", "synonym substitution probability", "", &R::augment, &AugmentConfig::sub_p);
  b.add_custom(
      "lexicon", "lexicon", "synonym lexicon file", "",
      [](const R& c) { return c.augment.lexicon_path ? c.augment.lexicon_path->string() : std::string(); },
      [](R& c, const std::string& v) {
        if (v.empty()) c.augment.lexicon_path.reset();
        else c.augment.lexicon_path = v;
      });

  b.section = "decode";
  b.add("beam", "beam", "beam size (1 decodes greedily)", "5", &R::decode, &DecodeConfig::beam_size);
  b.add("length_penalty", "length-penalty", "length penalty exponent", "0.6", &R::decode,
        &DecodeConfig::length_penalty);
  b.add("max_len_factor", "max-len-factor", "output cap per source token", "", &R::decode,
        &DecodeConfig::max_len_factor);
  b.add("max_len_const", "max-len-const", "output cap offset", "", &R::decode, &DecodeConfig::max_len_const);
  b.add("max_len", "max-len", "fixed output cap (0 uses factor and offset)", "", &R::decode,
        &DecodeConfig::max_len);

  b.section = "paths";
  b.add_text("train_src", "train-src", "training sources", &PathsConfig::train_src);
  b.add_text("train_tgt", "train-tgt", "training targets", &PathsConfig::train_tgt);
  b.add_text("valid_src", "valid-src", "validation sources", &PathsConfig::valid_src);
  b.add_text("valid_tgt", "valid-tgt", "validation targets", &PathsConfig::valid_tgt);
  b.add_text("test_src", "test-src", "test sources", &PathsConfig::test_src);
  b.add_text("test_tgt", "test-tgt", "test targets", &PathsConfig::test_tgt);
  b.add_text("augmented", "augmented", "filtered augmented examples (x<TAB>u<TAB>y)",
             &PathsConfig::augmented);
  b.add_text("vectors", "vectors", "word vectors for the similarity filter", &PathsConfig::vectors);
  b.add_text("codes", "codes", "BPE merge table", &PathsConfig::codes);
  b.add_text("run_dir", "run-dir", "run directory", &PathsConfig::run_dir);
  return std::move(b.fields);
}

}  // namespace

void RunConfig::finalize() {
  train.mu = filter.mu;
  augment.seed = train.seed;
  model.validate();
  train.validate();
  filter.validate();
  augment.validate();
  decode.validate();
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = build_fields();
  return fields;
}

const ConfigField& config_field(std::string_view name) {
  for (const auto& f : config_fields())
    if (f.name() == name) return f;
  throw ConfigError(std::string(name), fmt::format("{}: unknown key", name));
}

RunConfig parse_run_config(std::string_view ini) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(ini)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("ini", fmt::format("malformed config at line {}: {}", e.line(), e.message()));
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(section, fmt::format("{}: key outside any section", section));
    for (const auto& [key, value] : body) config_field(section + "." + key).set(cfg, value.data());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : config_fields()) {
    if (f.section != section) {
      out += fmt::format("{}[{}]\n", section.empty() ? "" : "\n", f.section);
      section = f.section;
    }
    out += fmt::format("{} = {}\n", f.key, f.get(cfg));
  }
  return out;
}

}  // namespace ssnmt
