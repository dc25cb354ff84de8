// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "ssnmt/checkpoint.hpp"
#include "ssnmt/config.hpp"
#include "ssnmt/filter.hpp"
#include "ssnmt/gradcheck.hpp"
#include "ssnmt/metrics.hpp"
#include "ssnmt/pipeline.hpp"
#include "ssnmt/subword.hpp"
#include "ssnmt/trainer.hpp"

using namespace ssnmt;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct Context {
  fs::path cli;
  fs::path source;
  fs::path work;
};

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("failed: ") + what;
  }
}

void note(Outcome& o, const std::string& what) { o.detail += (o.detail.empty() ? "" : "; ") + what; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}


int run_cli(const Context& ctx, const std::string& args) {
  const std::string cmd = fmt::format("'{}' {} > /dev/null 2>&1", ctx.cli.string(), args);
  return std::system(cmd.c_str());
}

// 1. Reverse-mode gradients of the full tiny model against finite differences.
Outcome gradient_fidelity(const Context&) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kVocab = 9;
  double worst = 0;
  std::size_t checks = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto p = init_params(tiny_config(), kVocab, kVocab, seed);
    const ToyBatch b = toy_batch(2, kVocab, rng);
    const Tensor teacher = teacher_probs_at(p, b);
    const auto valid = non_pad(b.tgt_out);
    auto ce = [&] {
      return label_smoothed_ce(forward_teacher_forced(p, b.src, b.tgt_in, false, nullptr), b.tgt_out.ids, 0.1);
    };
    auto kl = [&] {
      return consistency_kl(teacher, forward_teacher_forced(p, b.aug, b.tgt_in, false, nullptr), valid);
    };
    auto both = [&] { return combined_loss(ce(), kl(), {0.5, 0.5}); };
    for (const std::function<Tensor()>& loss : {std::function<Tensor()>(ce), std::function<Tensor()>(kl),
                                                std::function<Tensor()>(both)}) {
      const auto r = grad_check(loss, p.entries(), 1e-2, FiniteDifference::kRichardson);
      worst = std::max(worst, r.max_rel_error);
      ++checks;
      require(o, r.coordinates > 0, "no coordinates compared");
    }
  }
  const double t = seconds_since(t0);
  require(o, worst < 1e-4, "max relative error < 1e-4");
  require(o, t < 120, "runtime < 2 minutes");
  note(o, fmt::format("max relative error {:.2e} over {} checks (CE, KL, combined x 5 seeds), {:.1f} s", worst,
                      checks, t));
  return o;
}

// 2. lambda = (1, 0) trains exactly like the cross-entropy-only trainer.
Outcome supervised_reduction(const Context& ctx) {
  Outcome o;
  ToyTaskConfig tc;
  tc.train_size = 200;
  tc.valid_size = 20;
  tc.particles = 2;
  tc.seed = 5;
  const ToyTask task = make_toy_task(tc);
  AugmentedCorpus aug;
  Augmenter augmenter(AugmentConfig{});
  for (const auto& p : task.train) aug.push_back({p.src, augmenter.augment(p.src, p.id), p.tgt, 0, 0, p.id});
  const PreparedData prepared = prepare_data(task.train, aug, task.valid, 200);

  TransformerConfig mc = tiny_config();
  mc.dropout = 0.1;
  mc.max_positions = 64;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.max_tokens = 200;
  cfg.warmup_steps = 30;
  cfg.avg_last_k = 2;
  cfg.seed = 17;
  cfg.weights = {1.0, 0.0};
  const fs::path a = ctx.work / "reduction" / "combined", b = ctx.work / "reduction" / "supervised";
  fs::remove_all(ctx.work / "reduction");
  fs::create_directories(a);
  fs::create_directories(b);
  const TrainResult ra = train(mc, cfg, prepared.data, RunDir{a});
  const TrainResult rb = train_supervised(mc, cfg, prepared.data, RunDir{b});
  require(o, metrics_csv(ra.log) == metrics_csv(rb.log), "metrics logs identical");
  require(o, read_file(a / "metrics.csv") == read_file(b / "metrics.csv"), "metrics.csv bytes identical");
  require(o, same_params(ra.final_params, rb.final_params), "final parameters bit-identical");
  require(o, same_params(ra.averaged, rb.averaged), "averaged parameters bit-identical");
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    const auto name = fmt::format("ckpt-epoch-{}.bin", e);
    require(o, read_file(a / name) == read_file(b / name), name + " bytes identical");
  }
  require(o, ra.log.size() == 3, "three epochs logged");
  note(o, fmt::format("3 epochs, {} steps, final CE {:.6f} in both runs", ra.log.back().step, ra.log.back().ce));
  return o;
}

// 3. token_kl against a direct-summation oracle.
Outcome kl_contract(const Context&) {
  Outcome o;
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> vocab(2, 12);
  std::size_t negative = 0, nonzero_self = 0;
  double max_self = 0, max_oracle_gap = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t v = vocab(rng);
    const auto p = random_distribution(v, rng);
    const auto q = random_distribution(v, rng);
    const double kl = token_kl(seq_of({p}), seq_of({q}));
    double direct = 0;
    for (std::size_t k = 0; k < v; ++k)
      if (p[k] > 0) direct += p[k] * std::log(p[k] / std::max<double>(q[k], kKlProbFloor));
    max_oracle_gap = std::max(max_oracle_gap, std::abs(kl - direct));
    negative += kl < 0;
    const double self = token_kl(seq_of({p}), seq_of({p}));
    max_self = std::max(max_self, std::abs(self));
    nonzero_self += !(self < 1e-12);
  }
  const double hand = token_kl(seq_of({{0.5, 0.5}}), seq_of({{0.25, 0.75}}));
  const double oracle = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  require(o, negative == 0, "token_kl >= 0 on 1000 pairs");
  require(o, nonzero_self == 0, "token_kl(p, p) < 1e-12");
  require(o, std::abs(hand - 0.1438) < 1e-4, "KL((0.5,0.5)||(0.25,0.75)) = 0.1438 within 1e-4");
  require(o, std::abs(hand - oracle) < 1e-12, "hand value equals direct summation");
  require(o, max_oracle_gap < 1e-12, "random pairs equal direct summation");
  note(o, fmt::format("hand value {:.6f}, max |KL(p,p)| {:.1e}, max gap to oracle {:.1e}", hand, max_self,
                      max_oracle_gap));
  return o;
}

// 4. The 20-pair filter fixture against its golden files, through the library and the CLI.
Outcome filter_golden(const Context& ctx) {
  Outcome o;
  const fs::path fx = ctx.source / "tests/fixtures/filter";
  const auto src = read_lines(fx / "src.txt");
  const auto aug = read_lines(fx / "aug.txt");
  const auto tgt = read_lines(fx / "tgt.txt");
  AugmentedCorpus examples;
  std::vector<Words> originals;
  for (std::size_t i = 0; i < src.size(); ++i) {
    examples.push_back({split_words(src[i]), split_words(aug[i]), split_words(tgt[i]), 0, 0, i});
    originals.push_back(split_words(src[i]));
  }
  const auto vectors = WordVectorEmbedding::load(fx / "vectors.txt");
  const FilterResult r = filter_examples(examples, originals, FilterConfig{}, vectors);
  require(o, examples.size() == 20, "fixture has 20 pairs");
  require(o, augmented_tsv(r.kept) == read_file(fx / "golden_kept.tsv"), "kept examples byte-exact");
  require(o, r.report.to_jsonl() == read_file(fx / "golden_report.jsonl"), "report byte-exact");
  std::size_t expected_inputs = r.report.inputs;
  for (const auto& s : r.report.stages) {
    require(o, s.kept + s.rejected == expected_inputs, "stage " + s.stage + " counts sum to its inputs");
    expected_inputs = s.kept;
  }
  require(o, r.report.kept() + r.report.total_rejected() == r.report.inputs, "inputs = kept + rejections");
  bool low = false, high = false, edge = false;
  for (const auto& k : r.kept) {
    low |= k.ratio == 0.7;
    high |= k.ratio == 1.4;
    edge |= k.sim == 0.5;
  }
  require(o, low, "ratio 0.7 kept");
  require(o, high, "ratio 1.4 kept");
  require(o, edge, "similarity 0.5 kept");

  const fs::path out = ctx.work / "filter";
  fs::create_directories(out);
  const int rc = run_cli(ctx, fmt::format("filter --vectors '{0}/vectors.txt' '{0}/src.txt' '{0}/aug.txt' "
                                          "'{0}/tgt.txt' -o '{1}/kept.tsv' --report '{1}/report.jsonl'",
                                          fx.string(), out.string()));
  require(o, rc == 0, "ssnmt filter exits 0");
  if (rc == 0) {
    require(o, read_file(out / "kept.tsv") == read_file(fx / "golden_kept.tsv"), "CLI kept file byte-exact");
    require(o, read_file(out / "report.jsonl") == read_file(fx / "golden_report.jsonl"), "CLI report byte-exact");
  }
  note(o, fmt::format("{} of {} kept (stages {}/{}/{} rejected)", r.report.kept(), r.report.inputs,
                      r.report.stages[0].rejected, r.report.stages[1].rejected, r.report.stages[2].rejected));
  return o;
}

// 5. Toy consistency experiment.
namespace toy {

constexpr double kCleanBleuGate = 90.0;
constexpr double kNoisySlack = 0.5;

ToyTaskConfig task_config() {
  ToyTaskConfig c;
  c.train_size = 2000;
  c.valid_size = 100;
  c.test_size = 200;
  c.lexicon_size = 24;
  c.min_len = 3;
  c.max_len = 8;
  c.particles = 4;
  c.test_drop_p = 0.2;
  c.seed = 1;
  return c;
}

TransformerConfig model_config() {
  TransformerConfig m;
  m.num_blocks = 2;
  m.num_heads = 4;
  m.d_model = 32;
  m.d_ffn = 64;
  m.dropout = 0.1;
  m.max_positions = 64;
  return m;
}

TrainConfig train_config(double lambda1) {
  TrainConfig t;
  t.epochs = 40;
  t.max_tokens = 300;
  t.warmup_steps = 200;
  t.lr_peak = 2e-3;
  t.avg_last_k = 3;
  t.seed = 1;
  t.weights = {lambda1, 1.0 - lambda1};
  return t;
}

DecodeConfig decode_config() {
  DecodeConfig d;
  d.beam_size = 1;
  return d;
}

void write_pairs(const fs::path& dir, const std::string& name, const std::vector<SentencePair>& pairs) {
  std::vector<std::string> s, t;
  for (const auto& p : pairs) {
    s.push_back(join_words(p.src));
    t.push_back(join_words(p.tgt));
  }
  write_lines(dir / (name + ".src"), s);
  write_lines(dir / (name + ".tgt"), t);
}

}  // namespace toy

Outcome toy_experiment(const Context& ctx) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const ToyTask task = make_toy_task(toy::task_config());
  AugmentConfig ac;
  ac.seed = 1;
  const FilterResult filtered = run_pipeline(task.train, Augmenter(ac), FilterConfig{}, toy_word_vectors(task));
  const PreparedData prepared = prepare_data(task.train, filtered.kept, task.valid, 3000);
  const auto model = toy::model_config();
  const auto decode = toy::decode_config();

  const TrainResult base = train(model, toy::train_config(1.0), prepared.data);
  const Translator base_tr = make_translator(prepared, base.averaged.clone());
  const double base_clean = test_bleu(base_tr, task.test, decode);
  const double base_noisy = test_bleu(base_tr, task.noisy_test, decode);

  const TrainResult cons = train(model, toy::train_config(0.5), prepared.data);
  const Translator cons_tr = make_translator(prepared, cons.averaged.clone());
  const double cons_clean = test_bleu(cons_tr, task.test, decode);
  const double cons_noisy = test_bleu(cons_tr, task.noisy_test, decode);
  const double t_main = seconds_since(t0);

  require(o, base_clean >= toy::kCleanBleuGate, fmt::format("(a) baseline clean BLEU >= {}", toy::kCleanBleuGate));
  require(o, cons_noisy >= base_noisy - toy::kNoisySlack,
          fmt::format("(b) consistency noisy BLEU >= baseline - {}", toy::kNoisySlack));

  // (c) the lambda sweep through the command-line tool, on the same data at half the epochs.
  const fs::path dir = ctx.work / "sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  toy::write_pairs(dir, "train", task.train);
  toy::write_pairs(dir, "valid", task.valid);
  toy::write_pairs(dir, "test", task.noisy_test);
  write_file(dir / "augmented.tsv", augmented_tsv(filtered.kept));
  RunConfig rc;
  rc.model = model;
  rc.train = toy::train_config(0.5);
  rc.train.epochs = 20;
  rc.decode = decode;
  write_file(dir / "config.ini", serialize_run_config(rc));
  const int status = run_cli(
      ctx, fmt::format("sweep-lambda --config '{0}/config.ini' --train-src '{0}/train.src' --train-tgt "
                       "'{0}/train.tgt' --valid-src '{0}/valid.src' --valid-tgt '{0}/valid.tgt' --test-src "
                       "'{0}/test.src' --test-tgt '{0}/test.tgt' --augmented '{0}/augmented.tsv' -o '{0}/sweep.csv'",
                       dir.string()));
  require(o, status == 0, "ssnmt sweep-lambda exits 0");
  double best_l1 = -1, best_bleu = -1;
  std::size_t rows = 0;
  if (status == 0 && fs::exists(dir / "sweep.csv")) {
    const auto lines = read_lines(dir / "sweep.csv");
    require(o, !lines.empty() && lines[0] == kSweepHeader, "sweep header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      ++rows;
      const auto c1 = lines[i].find(',');
      const auto c3 = lines[i].rfind(',');
      const double l1 = std::stod(lines[i].substr(0, c1));
      const double bleu = std::stod(lines[i].substr(c3 + 1));
      if (bleu > best_bleu) {
        best_bleu = bleu;
        best_l1 = l1;
      }
    }
  } else {
    require(o, false, "sweep CSV exists");
  }
  require(o, rows == 9, "(c) sweep CSV has 9 rows");
  require(o, best_l1 >= 0 && best_l1 < 1.0, "(c) argmax lambda1 < 1.0");
  const double t = seconds_since(t0);
  require(o, t < 1800, "runtime < 30 minutes");
  note(o, fmt::format("baseline clean {:.2f} noisy {:.2f}; consistency clean {:.2f} noisy {:.2f}; "
                      "{} augmented kept of {}; sweep argmax lambda1 {} (noisy BLEU {:.2f}); {:.0f} s + {:.0f} s sweep",
                      base_clean, base_noisy, cons_clean, cons_noisy, filtered.kept.size(), task.train.size(), best_l1,
                      best_bleu, t_main, t - t_main));
  return o;
}

// 6. Beam search against greedy decoding and exhaustive enumeration.
Outcome beam_contracts(const Context&) {
  Outcome o;
  std::size_t greedy_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 1000);
    const auto p = init_params(tiny_config(), 9, 9, seed);
    const auto src = random_sequences(1, 1, 5, 9, rng)[0];
    DecodeConfig c;
    c.beam_size = 1;
    c.max_len = 8;
    const auto g = greedy_decode(p, src, c);
    const auto b = beam_search(p, src, c);
    greedy_mismatch += g.tokens != b.tokens || g.logprob != b.logprob;
  }
  require(o, greedy_mismatch == 0, "beam 1 equals greedy on 100 random tiny models");

  std::size_t instances = 0, disagreements = 0;
  double worst = 0;
  auto compare = [&](const StepScorer& scorer, std::size_t max_len, TokenId eos) {
    Brute best;
    std::vector<TokenId> prefix;
    enumerate(scorer, prefix, 0.0, max_len, eos, 0.6, best);
    const auto r = beam_search(scorer, max_len, eos, 1000, 0.6);
    ++instances;
    disagreements += r.tokens != best.tokens;
    worst = std::max({worst, std::abs(r.score - best.score), std::abs(r.logprob - best.logprob)});
  };
  for (std::size_t vocab = 3; vocab <= 5; ++vocab)
    for (std::size_t len = 1; len <= 4; ++len)
      for (std::uint64_t seed = 0; seed < 5; ++seed) compare(hashed_scorer(vocab, seed), len, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 77);
    const auto p = init_params(tiny_config(), 6, 5, seed);
    const auto src = random_sequences(1, 1, 4, 6, rng)[0];
    for (std::size_t len = 1; len <= 4; ++len) compare(model_scorer(p, src), len, Vocab::kEos);
  }
  require(o, disagreements == 0, "beam equals exhaustive enumeration");
  require(o, worst <= 1e-9, "scores match to 1e-9");
  note(o, fmt::format("100 greedy comparisons; {} exhaustive instances, worst score gap {:.1e}", instances, worst));
  return o;
}

// 7. Corpus BLEU against a brute-force n-gram counter.
Outcome bleu_oracle(const Context&) {
  Outcome o;
  Rng rng(1);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto refs = random_corpus(6, rng);
    const auto hyps = random_corpus(6, rng);
    for (bool smooth : {false, true})
      worst = std::max(worst, std::abs(corpus_bleu(hyps, refs, 4, smooth).score - brute_bleu(hyps, refs, smooth)));
  }
  std::vector<Words> identity;
  for (int i = 0; i < 20; ++i) identity.push_back(random_corpus(1, rng)[0]);
  identity.push_back({"a", "b", "c", "d", "e"});
  const double id_score = corpus_bleu(identity, identity).score;
  const double clipped = corpus_bleu({{"the", "the", "the", "the"}}, {{"the", "cat"}}).score;
  require(o, worst <= 1e-9, "50 random corpora within 1e-9 of the oracle");
  require(o, id_score == 100.0, "identity corpus scores 100.0");
  require(o, clipped == 0.0, "clipped example scores 0 unsmoothed");
  note(o, fmt::format("worst gap {:.1e}; identity {}; clipped {}", worst, id_score, clipped));
  return o;
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

// 8. Recipe mechanics and whole-pipeline reproducibility.
Outcome recipe_mechanics(const Context& ctx) {
  Outcome o;
  const TrainConfig cfg;
  require(o, inv_sqrt_lr(cfg.warmup_steps, cfg) == 0.0005, "inv_sqrt_lr(warmup) == 0.0005");

  const auto snap = init_params(tiny_config(), 9, 9, 4);
  std::vector<TransformerParams> snaps;
  for (int i = 0; i < 10; ++i) snaps.push_back(snap.clone());
  require(o, same_params(average_checkpoints(snaps, 10), snap), "averaging 10 identical snapshots is the identity");

  const auto corpus = read_lines(ctx.source / "tests/fixtures/bpe/corpus.txt");
  const MergeTable table = learn_bpe(corpus, 3000);
  bool exact = true;
  for (const auto& line : corpus) exact &= detokenize(apply_bpe(split_words(line), table)) == split_words(line);
  require(o, exact, "BPE round trip exact on the fixture corpus");

  const fs::path fx = ctx.source / "tests/fixtures/pipeline";
  const fs::path script = ctx.source / "tests/cli/pipeline.sh";
  // Both runs use the same directory, since the run records its own paths.
  const fs::path live = ctx.work / "repro" / "run", a = ctx.work / "repro" / "a", b = ctx.work / "repro" / "b";
  fs::remove_all(ctx.work / "repro");
  fs::create_directories(ctx.work / "repro");
  const auto run = [&](const fs::path& keep) {
    const int rc = std::system(fmt::format("bash '{}' '{}' '{}' '{}' > /dev/null 2>&1", script.string(),
                                           ctx.cli.string(), fx.string(), live.string())
                                   .c_str());
    if (rc == 0) fs::rename(live, keep);
    return rc;
  };
  require(o, run(a) == 0 && run(b) == 0, "both pipeline runs exit 0");
  std::size_t compared = 0, differing = 0;
  const auto fa = files_under(a), fb = files_under(b);
  require(o, fa == fb, "both runs write the same files");
  for (const auto& f : fa) {
    ++compared;
    differing += read_file(a / f) != read_file(b / f);
  }
  require(o, compared > 0 && differing == 0, "pipeline artifacts byte-identical");
  note(o, fmt::format("{} BPE merges; {} pipeline artifacts compared, {} differ", table.num_merges(), compared,
                      differing));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context ctx;
  std::set<int> only;
  app.add_option("--cli", ctx.cli, "ssnmt executable")->required();
  app.add_option("--source", ctx.source, "Source tree root")->required();
  app.add_option("--work", ctx.work, "Scratch directory")->required();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {"gradient fidelity", gradient_fidelity},     {"supervised reduction", supervised_reduction},
      {"KL contract", kl_contract},                 {"filter golden file", filter_golden},
      {"toy consistency experiment", toy_experiment}, {"beam contracts", beam_contracts},
      {"BLEU oracle", bleu_oracle},                 {"recipe mechanics", recipe_mechanics},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("{} criterion {}: {} [PRIMARY] {}\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
