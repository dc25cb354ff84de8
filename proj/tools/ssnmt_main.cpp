#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "ssnmt/augment.hpp"
#include "ssnmt/checkpoint.hpp"
#include "ssnmt/config.hpp"
#include "ssnmt/filter.hpp"
#include "ssnmt/metrics.hpp"
#include "ssnmt/pipeline.hpp"
#include "ssnmt/trainer.hpp"

using namespace ssnmt;
namespace fs = std::filesystem;

namespace {

// Config fields exposed as flags on one subcommand. Values given on the
// command line override the config file.
class FieldFlags {
 public:
  FieldFlags(CLI::App* app, std::vector<std::string> sections) {
    app->add_option("--config", config_, "INI run configuration");
    const RunConfig defaults;
    for (const auto& f : config_fields()) {
      if (std::find(sections.begin(), sections.end(), f.section) == sections.end()) continue;
      std::string help = f.help;
      const std::string def = f.get(defaults);
      help += fmt::format(" (default: {}", def.empty() ? "none" : def);
      if (!f.paper.empty()) help += fmt::format(", paper: {}", f.paper);
      help += ")";
      app->add_option("--" + f.flag, values_[f.name()], help)->option_text("VALUE");
    }
  }

  void require(const std::string& name) { required_.push_back(name); }

  RunConfig resolve() const {
    RunConfig cfg = config_.empty() ? RunConfig{} : load_run_config(config_);
    for (const auto& [name, value] : values_)
      if (value) config_field(name).set(cfg, *value);
    for (const auto& name : required_)
      if (config_field(name).get(cfg).empty())
        throw ConfigError(name, fmt::format("{}: required (--{} or the config file)", name, config_field(name).flag));
    cfg.finalize();
    return cfg;
  }

 private:
  std::string config_;
  std::map<std::string, std::optional<std::string>> values_;
  std::vector<std::string> required_;
};

std::vector<std::string> read_all_lines(const std::vector<std::string>& files) {
  std::vector<std::string> out;
  for (const auto& f : files) {
    auto lines = read_lines(f);
    out.insert(out.end(), lines.begin(), lines.end());
  }
  return out;
}

std::vector<SentencePair> optional_corpus(const std::string& src, const std::string& tgt) {
  if (src.empty() && tgt.empty()) return {};
  if (src.empty() || tgt.empty())
    throw ConfigError(src.empty() ? "paths.valid_src" : "paths.valid_tgt", "source and target must be given together");
  return load_parallel(src, tgt).pairs;
}

PreparedData prepare_from_config(const RunConfig& cfg, bool always_augmented = false) {
  const auto train = load_parallel(cfg.paths.train_src, cfg.paths.train_tgt).pairs;
  const auto valid = optional_corpus(cfg.paths.valid_src, cfg.paths.valid_tgt);
  AugmentedCorpus augmented;
  const bool kl = always_augmented || (cfg.train.consistency && cfg.train.weights.lambda2 > 0);
  if (!cfg.paths.augmented.empty()) augmented = load_augmented_tsv(cfg.paths.augmented);
  if (kl && augmented.empty())
    throw ConfigError("paths.augmented", "paths.augmented: lambda2 > 0 needs a non-empty augmented file");
  if (cfg.paths.codes.empty()) return prepare_data(train, kl ? augmented : AugmentedCorpus{}, valid, cfg.bpe_merges);

  PreparedData p;
  p.table = MergeTable::load(cfg.paths.codes);
  std::vector<std::vector<std::string>> src_side, tgt_side;
  for (const auto& s : train) {
    src_side.push_back(apply_bpe(s.src, p.table));
    tgt_side.push_back(apply_bpe(s.tgt, p.table));
  }
  if (kl)
    for (const auto& a : augmented) src_side.push_back(apply_bpe(a.u, p.table));
  p.src_vocab = build_vocab(src_side);
  p.tgt_vocab = build_vocab(tgt_side);
  p.data = numericalize_data(p.table, p.src_vocab, p.tgt_vocab, train, kl ? augmented : AugmentedCorpus{}, valid);
  return p;
}

Translator load_translator(const fs::path& run_dir, const std::string& checkpoint) {
  Checkpoint ckpt = load_checkpoint(run_dir / checkpoint);
  return Translator(std::move(ckpt.params), MergeTable::load(run_dir / "bpe.codes"),
                    Vocab::load(run_dir / "src.vocab"), Vocab::load(run_dir / "tgt.vocab"));
}

std::vector<Words> read_sentences(const std::string& path) {
  std::vector<Words> out;
  for (const auto& line : read_lines(path)) out.push_back(split_words(line));
  return out;
}

void write_sentences(const std::string& path, const std::vector<Words>& sentences) {
  std::vector<std::string> lines;
  lines.reserve(sentences.size());
  for (const auto& s : sentences) lines.push_back(join_words(s));
  write_lines(path, lines);
}

int run(int argc, char** argv) {
  CLI::App app{"Consistency-regularized semi-supervised NMT toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // learn-bpe
  auto* learn = app.add_subcommand("learn-bpe", "Learn a BPE merge table from text files");
  FieldFlags learn_flags(learn, {});
  std::vector<std::string> learn_inputs;
  std::string learn_out;
  std::optional<std::size_t> learn_merges;
  learn->add_option("inputs", learn_inputs, "Text files, one sentence per line")->required();
  learn->add_option("-o,--output", learn_out, "Merge table to write")->required();
  learn->add_option("--merges", learn_merges, "merge operations (default: 3000, paper: 3000)");

  // apply-bpe
  auto* apply = app.add_subcommand("apply-bpe", "Segment text with a merge table");
  std::string apply_codes, apply_in, apply_out;
  apply->add_option("--codes", apply_codes, "Merge table")->required();
  apply->add_option("input", apply_in, "Text to segment")->required();
  apply->add_option("output", apply_out, "Segmented text")->required();

  // augment
  auto* aug = app.add_subcommand("augment", "Write one augmented sentence per input line");
  FieldFlags aug_flags(aug, {"augment", "decode"});
  std::optional<std::string> aug_seed;
  std::string aug_in, aug_out, aug_forward, aug_reverse;
  aug->add_option("--seed", aug_seed, "seed for every random stream (default: 1)");
  aug->add_option("--forward", aug_forward, "Run directory of the source-to-target model (round_trip)");
  aug->add_option("--reverse", aug_reverse, "Run directory of the target-to-source model (round_trip)");
  aug->add_option("input", aug_in, "Clean sources")->required();
  aug->add_option("output", aug_out, "Augmented sources")->required();

  // filter
  auto* filt = app.add_subcommand("filter", "Dedup, length-ratio and similarity filtering");
  FieldFlags filt_flags(filt, {"filter"});
  std::string filt_src, filt_aug, filt_tgt, filt_out, filt_report, filt_vectors;
  filt->add_option("--vectors", filt_vectors, "Word vectors, first line \"d <dim>\"")->required();
  filt->add_option("src", filt_src, "Clean sources")->required();
  filt->add_option("aug", filt_aug, "Augmented sources, line-aligned with src")->required();
  filt->add_option("tgt", filt_tgt, "Targets, line-aligned with src")->required();
  filt->add_option("-o,--output", filt_out, "Kept examples, x<TAB>u<TAB>y")->required();
  filt->add_option("--report", filt_report, "Per-stage counts as JSON lines (default: stdout)");

  // train
  auto* tr = app.add_subcommand("train", "Train a model into a run directory");
  FieldFlags train_flags(tr, {"model", "train", "filter", "paths"});
  train_flags.require("paths.train_src");
  train_flags.require("paths.train_tgt");
  train_flags.require("paths.run_dir");

  // translate
  auto* trans = app.add_subcommand("translate", "Translate text with a trained run");
  FieldFlags trans_flags(trans, {"decode"});
  std::string trans_dir, trans_ckpt = "ckpt-avg.bin", trans_in, trans_out;
  trans->add_option("--model", trans_dir, "Run directory written by train")->required();
  trans->add_option("--checkpoint", trans_ckpt, "Checkpoint file inside the run directory")->capture_default_str();
  trans->add_option("input", trans_in, "Sources")->required();
  trans->add_option("output", trans_out, "Translations")->required();

  // score
  auto* score = app.add_subcommand("score", "Corpus BLEU of hypotheses against references");
  std::string score_hyp, score_ref;
  bool score_smooth = false;
  score->add_option("hyp", score_hyp, "Hypotheses")->required();
  score->add_option("ref", score_ref, "References")->required();
  score->add_flag("--smooth", score_smooth, "Add-one smoothing for orders 2 to 4");

  // average-checkpoints
  auto* avg = app.add_subcommand("average-checkpoints", "Elementwise mean of checkpoints");
  std::vector<std::string> avg_inputs;
  std::string avg_out;
  avg->add_option("checkpoints", avg_inputs, "Checkpoint files")->required();
  avg->add_option("-o,--output", avg_out, "Averaged checkpoint")->required();

  // sweep-lambda
  auto* sweep = app.add_subcommand("sweep-lambda", "Train and score lambda1 = 0.1..0.9, lambda2 = 1 - lambda1");
  FieldFlags sweep_flags(sweep, {"model", "train", "filter", "decode", "paths"});
  std::string sweep_out;
  sweep->add_option("-o,--output", sweep_out, "CSV lambda1,lambda2,valid_bleu,test_bleu")->required();
  for (const char* name : {"paths.train_src", "paths.train_tgt", "paths.valid_src", "paths.valid_tgt",
                           "paths.test_src", "paths.test_tgt", "paths.augmented"})
    sweep_flags.require(name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*learn) {
    RunConfig cfg = learn_flags.resolve();
    const std::size_t merges = learn_merges.value_or(cfg.bpe_merges);
    const MergeTable table = learn_bpe(read_all_lines(learn_inputs), merges);
    table.save(learn_out);
    fmt::print(stderr, "learned {} merges\n", table.num_merges());
  } else if (*apply) {
    const MergeTable table = MergeTable::load(apply_codes);
    std::vector<std::string> lines;
    for (const auto& line : read_lines(apply_in)) lines.push_back(join_words(apply_bpe(split_words(line), table)));
    write_lines(apply_out, lines);
  } else if (*aug) {
    RunConfig cfg = aug_flags.resolve();
    if (aug_seed) {
      config_field("train.seed").set(cfg, *aug_seed);
      cfg.finalize();
    }
    const auto sentences = read_sentences(aug_in);
    std::optional<Translator> fwd, rev;
    if (cfg.augment.strategy == AugmentStrategy::kRoundTrip) {
      if (aug_forward.empty() || aug_reverse.empty())
        throw ConfigError("augment.strategy", "augment.strategy: round_trip needs --forward and --reverse");
      fwd.emplace(load_translator(aug_forward, "ckpt-avg.bin"));
      rev.emplace(load_translator(aug_reverse, "ckpt-avg.bin"));
      AugmentConfig ac = cfg.augment;
      ac.round_trip_decode = cfg.decode;
      write_sentences(aug_out, Augmenter(ac, &*fwd, &*rev).augment_all(sentences));
    } else {
      write_sentences(aug_out, Augmenter(cfg.augment).augment_all(sentences));
    }
  } else if (*filt) {
    RunConfig cfg = filt_flags.resolve();
    const auto src = read_lines(filt_src);
    const auto u = read_lines(filt_aug);
    const auto tgt = read_lines(filt_tgt);
    if (src.size() != u.size() || src.size() != tgt.size())
      throw Error(fmt::format("filter: line counts differ ({} / {} / {})", src.size(), u.size(), tgt.size()));
    AugmentedCorpus examples;
    std::vector<Words> originals;
    for (std::size_t i = 0; i < src.size(); ++i) {
      AugmentedExample e;
      e.x = split_words(src[i]);
      e.u = split_words(u[i]);
      e.y = split_words(tgt[i]);
      e.id = i;
      originals.push_back(e.x);
      examples.push_back(std::move(e));
    }
    const auto vectors = WordVectorEmbedding::load(filt_vectors);
    const FilterResult r = filter_examples(examples, originals, cfg.filter, vectors);
    write_file(filt_out, augmented_tsv(r.kept));
    if (filt_report.empty()) fmt::print("{}", r.report.to_jsonl());
    else write_file(filt_report, r.report.to_jsonl());
  } else if (*tr) {
    const RunConfig cfg = train_flags.resolve();
    const PreparedData prepared = prepare_from_config(cfg);
    const fs::path dir = cfg.paths.run_dir;
    fs::create_directories(dir);
    write_file(dir / "config.ini", serialize_run_config(cfg));
    prepared.table.save(dir / "bpe.codes");
    prepared.src_vocab.save(dir / "src.vocab");
    prepared.tgt_vocab.save(dir / "tgt.vocab");
    const TrainResult r = train(cfg.model, cfg.train, prepared.data, RunDir{dir});
    if (!r.log.empty())
      fmt::print(stderr, "trained {} epochs, {} steps, last valid BLEU {:.2f}\n", r.log.size(), r.log.back().step,
                 r.log.back().valid_bleu);
  } else if (*trans) {
    const RunConfig cfg = trans_flags.resolve();
    const Translator t = load_translator(trans_dir, trans_ckpt);
    write_sentences(trans_out, t.translate_all(read_sentences(trans_in), cfg.decode));
  } else if (*score) {
    const auto hyps = read_sentences(score_hyp);
    const auto refs = read_sentences(score_ref);
    if (hyps.size() != refs.size())
      throw Error(fmt::format("score: {} hypotheses but {} references", hyps.size(), refs.size()));
    fmt::print("{}\n", corpus_bleu(hyps, refs, 4, score_smooth).to_json());
  } else if (*avg) {
    std::vector<TransformerParams> snaps;
    std::size_t epoch = 0;
    for (const auto& f : avg_inputs) {
      Checkpoint c = load_checkpoint(f);
      epoch = c.epoch;
      snaps.push_back(std::move(c.params));
    }
    save_checkpoint(avg_out, Checkpoint{average_checkpoints(snaps, snaps.size()), epoch, 0.0});
  } else if (*sweep) {
    const RunConfig cfg = sweep_flags.resolve();
    const PreparedData prepared = prepare_from_config(cfg, true);
    const auto test = load_parallel(cfg.paths.test_src, cfg.paths.test_tgt).pairs;
    write_file(sweep_out, sweep_csv(sweep_lambda(cfg.model, cfg.train, prepared, test, cfg.decode)));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const IoError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
