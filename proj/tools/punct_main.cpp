#include <CLI11.hpp>
#include <iostream>

#include "punct/model_io.hpp"
#include "punct/tasks.hpp"
#include "punct/parallel.hpp"
#include "punct/train.hpp"
#include "punct/trigram.hpp"

using namespace punct;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitNoData = 3;
constexpr int kExitMismatch = 4;

struct Fail {
  int code;
  std::string message;
};

std::vector<RawSentence> read_treebank(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw Fail{kExitBadInput, e.what()};
  }
  try {
    return parse_conllu(text);
  } catch (const std::exception& e) {
    throw Fail{kExitBadInput, path + ": " + e.what()};
  }
}

std::vector<AnnotatedSentence> depunct_all(std::vector<RawSentence>& raw,
                                           const PreprocessConfig& prep,
                                           const WordCounts* counts,
                                           const char* label) {
  preprocess_treebank(raw, prep, counts);
  CorpusStats stats;
  auto sents = depunctuate_treebank(raw, &stats);
  if (stats.omitted_nonleaf || stats.non_projective || stats.no_root)
    std::cerr << label << ": kept " << stats.kept << " sentences, omitted "
              << stats.omitted_nonleaf << " (non-leaf punctuation), dropped "
              << stats.non_projective << " (non-projective), " << stats.no_root
              << " (no usable root)\n";
  return sents;
}

// exit 4 when the treebank uses relations the model has no inventory for
void check_relations(const Model& m, std::span<const AnnotatedSentence> sents,
                     bool strict) {
  if (!strict) return;
  std::vector<std::string> unknown;
  for (const auto& s : sents)
    for (const auto& nd : s.tree.nodes)
      if (m.vocab.find_deprel(nd.deprel) < 0 &&
          std::find(unknown.begin(), unknown.end(), nd.deprel) == unknown.end())
        unknown.push_back(nd.deprel);
  if (!unknown.empty()) {
    std::string msg = "relations without a puncteme pair inventory:";
    for (const auto& d : unknown) msg += " " + d;
    throw Fail{kExitMismatch, msg};
  }
}

Model load_model_or_fail(const std::string& path) {
  try {
    return read_model_file(path);
  } catch (const std::exception& e) {
    throw Fail{kExitBadInput, e.what()};
  }
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    write_text_file(path, content);
}

// drops the synthetic start mark when writing restored sentences back out
SlotStrings strip_start_mark(SlotStrings x, const std::string& mark) {
  if (!mark.empty() && !x.empty() && !x[0].empty() && x[0][0] == mark)
    x[0].erase(x[0].begin());
  return x;
}

std::string misc_puncteme(const std::vector<std::string>& toks) {
  if (toks.empty()) return "∅";
  std::string s;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) s += '+';
    s += toks[i];
  }
  return s;
}

struct TrainArgs {
  std::string train_path, dev_path, out_path;
  TrainConfig cfg;
  std::string direction = "l2r";
  std::string channel = "full";
  PreprocessConfig prep;
  std::string final_mark = ".";
  // correction training
  std::string errorful_path, esl_model_path, ref_model_path;
};

int run_train(TrainArgs& a) {
  auto raw_train = read_treebank(a.train_path);
  WordCounts counts;
  {
    auto structural = raw_train;
    for (auto& s : structural) preprocess_structural(s, a.prep);
    counts = count_word_forms(structural);
  }
  auto train_sents = depunct_all(raw_train, a.prep, &counts, "train");
  if (train_sents.empty()) throw Fail{kExitNoData, "zero trainable sentences"};
  std::vector<AnnotatedSentence> dev_sents;
  if (!a.dev_path.empty()) {
    auto raw_dev = read_treebank(a.dev_path);
    dev_sents = depunct_all(raw_dev, a.prep, &counts, "dev");
  }

  a.cfg.direction = a.direction == "r2l" ? Direction::R2L : Direction::L2R;
  a.cfg.direction_auto = a.direction == "auto";
  a.cfg.identity_channel = a.channel == "identity";

  PunctemeVocab vocab;
  std::vector<ErrorfulPunctemes> errorful;
  const std::vector<ErrorfulPunctemes>* errorful_ptr = nullptr;
  Model esl_model, ref_model;
  if (!a.errorful_path.empty()) {
    // correction training: recover underlying punctemes of the errorful
    // sentences under the esl model, aligned with the corrected treebank
    if (a.esl_model_path.empty() || a.ref_model_path.empty())
      throw Fail{kExitBadInput,
                 "correction training needs --esl-model and --ref-model"};
    esl_model = load_model_or_fail(a.esl_model_path);
    ref_model = load_model_or_fail(a.ref_model_path);
    auto raw_err = read_treebank(a.errorful_path);
    auto err_sents = depunct_all(raw_err, esl_model.prep, nullptr, "errorful");
    if (err_sents.size() != train_sents.size())
      throw Fail{kExitBadInput,
                 "errorful and corrected treebanks have different sizes (" +
                     std::to_string(err_sents.size()) + " vs " +
                     std::to_string(train_sents.size()) + ")"};
    errorful.resize(train_sents.size());
    for (size_t i = 0; i < err_sents.size(); ++i) {
      if (err_sents[i].tree.n() != train_sents[i].tree.n())
        throw Fail{kExitBadInput,
                   "sentence " + std::to_string(i) +
                       ": errorful/corrected trees are not isomorphic"};
      PreparedSentence ps = prepare_sentence(esl_model, err_sents[i], i, false);
      ViterbiResult vit = viterbi_underlying(esl_model, ps);
      ErrorfulPunctemes ep(size_t(err_sents[i].tree.n()));
      if (vit.ok)
        for (int w = 1; w <= err_sents[i].tree.n(); ++w) {
          auto [l, r] = vit.tree.punctemes[size_t(w - 1)];
          ep[size_t(w - 1)] = {esl_model.vocab.punctemes[size_t(l)],
                               esl_model.vocab.punctemes[size_t(r)]};
        }
      errorful[i] = std::move(ep);
    }
    errorful_ptr = &errorful;
    vocab = ref_model.vocab;
    a.cfg.reference_channel = &ref_model.channel;
    if (a.cfg.channel_pull <= 0) a.cfg.channel_pull = 1.0;
  } else {
    vocab = estimate_vocab(train_sents);
  }

  TrainResult res;
  try {
    res = train_model(train_sents, dev_sents, vocab, a.prep,
                      SymmetricPairTable::defaults(), a.cfg, errorful_ptr);
  } catch (const std::exception& e) {
    throw Fail{kExitNoData, e.what()};
  }
  res.model.final_mark = a.final_mark;
  res.best.final_mark = a.final_mark;
  write_model_file(res.model, a.out_path);
  write_model_file(res.best, a.out_path + ".best");
  write_text_file(a.out_path + ".log.tsv", log_to_tsv(res.log));
  std::cerr << "direction "
            << (res.chosen_direction == Direction::L2R ? "l2r" : "r2l")
            << ", dev-best epoch " << res.best_epoch << "; wrote " << a.out_path
            << ", " << a.out_path << ".best, " << a.out_path << ".log.tsv\n";
  return 0;
}

int run_inspect(const std::string& model_path, const std::string& treebank,
                const std::string& out_path) {
  Model m = load_model_or_fail(model_path);
  std::vector<std::vector<long>> counts(
      size_t(m.channel.sigma), std::vector<long>(size_t(m.channel.sigma), 0));
  if (!treebank.empty()) {
    auto raw = read_treebank(treebank);
    auto sents = depunct_all(raw, m.prep, nullptr, "treebank");
    for (size_t i = 0; i < sents.size(); ++i) {
      PreparedSentence ps = prepare_sentence(m, sents[i], i, false);
      ViterbiResult vit = viterbi_underlying(m, ps);
      if (!vit.ok) continue;
      auto u = underlying_slots(sents[i], vit.tree, m.vocab);
      // bigrams are counted in window orientation, so each row's count and
      // probabilities describe the same sliding window
      const bool mir = m.channel.direction == Direction::R2L;
      for (const auto& slot : u)
        for (size_t k = 1; k < slot.size(); ++k) {
          int x = m.token_id(slot[k - 1]), y = m.token_id(slot[k]);
          if (mir) std::swap(x, y);
          if (x >= 0 && y >= 0) ++counts[size_t(x)][size_t(y)];
        }
    }
  }
  struct Row {
    long count;
    int x, y;
  };
  std::vector<Row> rows;
  for (int x = 0; x < m.channel.sigma; ++x)
    for (int y = 0; y < m.channel.sigma; ++y)
      rows.push_back({counts[size_t(x)][size_t(y)], x, y});
  std::sort(rows.begin(), rows.end(), [](const Row& p, const Row& q) {
    if (p.count != q.count) return p.count > q.count;
    if (p.x != q.x) return p.x < q.x;
    return p.y < q.y;
  });
  std::string out =
      "a\tb\tp_keep\tp_left_absorb\tp_right_absorb\tp_transpose\tcount\n";
  char buf[160];
  for (const auto& r : rows) {
    auto d = edit_distribution(r.x, r.y, m.channel);
    std::snprintf(buf, sizeof buf, "%s\t%s\t%.6f\t%.6f\t%.6f\t%.6f\t%ld\n",
                  m.sigma[size_t(r.x)].c_str(), m.sigma[size_t(r.y)].c_str(),
                  d[0], d[1], d[2], d[3], r.count);
    out += buf;
  }
  write_output(out_path, out);
  return 0;
}

int run_perplexity(const std::string& model_path, const std::string& input,
                   int threads, bool strict) {
  Model m = load_model_or_fail(model_path);
  auto raw = read_treebank(input);
  auto sents = depunct_all(raw, m.prep, nullptr, "input");
  check_relations(m, sents, strict);
  std::vector<PreparedSentence> ps;
  ps.reserve(sents.size());
  for (size_t i = 0; i < sents.size(); ++i)
    ps.push_back(prepare_sentence(m, sents[i], i, false));
  PerplexityResult r = perplexity(m, ps, threads);
  std::cout << "sentences\tslots\tlog_likelihood\tperplexity\tskipped\n"
            << r.used << '\t' << r.slots << '\t' << r.log_likelihood << '\t'
            << r.perplexity << '\t' << r.skipped << '\n';
  return 0;
}

int run_restore(const std::string& model_path, const std::string& input,
                const std::string& output, MbrConfig mbr, bool trivial,
                bool strict, int threads) {
  Model m = load_model_or_fail(model_path);
  auto raw = read_treebank(input);
  auto sents = depunct_all(raw, m.prep, nullptr, "input");
  check_relations(m, sents, strict);
  std::vector<std::string> parts(sents.size());
  parallel_for(int(sents.size()), threads, [&](int i) {
    SlotStrings x =
        trivial ? trivial_baseline(sents[size_t(i)].tree, m.final_mark)
                : restore(m, sents[size_t(i)].tree, mbr, uint64_t(i));
    parts[size_t(i)] = write_conllu(emit_with_punctuation(
        sents[size_t(i)].tree, strip_start_mark(x, m.prep.start_mark)));
  });
  std::string out;
  for (auto& p : parts) out += p;
  write_output(output, out);
  return 0;
}

int run_correct(const std::string& esl_path, const std::string& cesl_path,
                const std::string& corr_path, const std::string& input,
                const std::string& output, MbrConfig mbr, bool strict,
                int threads) {
  Model esl = load_model_or_fail(esl_path);
  Model cesl = load_model_or_fail(cesl_path);
  Model corr = load_model_or_fail(corr_path);
  auto raw = read_treebank(input);
  auto sents = depunct_all(raw, esl.prep, nullptr, "input");
  check_relations(esl, sents, strict);
  std::vector<std::string> parts(sents.size());
  std::vector<char> fb(sents.size(), 0);
  parallel_for(int(sents.size()), threads, [&](int i) {
    CorrectOutcome res =
        correct_sentence(esl, cesl, corr, sents[size_t(i)], mbr, uint64_t(i));
    fb[size_t(i)] = res.fell_back ? 1 : 0;
    parts[size_t(i)] = write_conllu(emit_with_punctuation(
        sents[size_t(i)].tree,
        strip_start_mark(res.output, esl.prep.start_mark)));
  });
  std::string out;
  long fell_back = 0;
  for (size_t i = 0; i < sents.size(); ++i) {
    fell_back += fb[i];
    out += parts[i];
  }
  if (fell_back)
    std::cerr << fell_back
              << " sentences fell back to restoration (likelihood 0 under the"
                 " esl model)\n";
  write_output(output, out);
  return 0;
}

int run_rephrase(const std::string& model_path, const std::string& input,
                 const std::string& output, uint64_t seed,
                 const std::string& mode, bool argmax,
                 const std::string& ordering_path) {
  auto raw = read_treebank(input);
  std::unique_ptr<PermutationSource> source;
  if (!ordering_path.empty())
    source = std::make_unique<FileOrderingSource>(
        FileOrderingSource::parse(read_text_file(ordering_path)));
  else
    source = std::make_unique<ShuffleSource>();

  std::string out;
  if (mode == "base") {
    for (size_t i = 0; i < raw.size(); ++i) {
      Rng rng = Rng::derive(seed, i);
      out += write_conllu(rephrase_baseline(raw[i], *source, rng));
    }
    write_output(output, out);
    return 0;
  }
  if (model_path.empty())
    throw Fail{kExitBadInput, "--model is required for --mode full"};
  Model m = load_model_or_fail(model_path);
  auto sents = depunct_all(raw, m.prep, nullptr, "input");
  long passed_through = 0;
  for (size_t i = 0; i < sents.size(); ++i) {
    Rng rng = Rng::derive(seed, i);
    RephraseResult r = rephrase(m, sents[i], *source, rng, argmax);
    if (!r.changed) ++passed_through;
    out += write_conllu(emit_with_punctuation(
        r.sentence.tree,
        strip_start_mark(r.sentence.slots, m.prep.start_mark)));
  }
  if (passed_through)
    std::cerr << passed_through
              << " sentences passed through unchanged (likelihood 0)\n";
  write_output(output, out);
  return 0;
}

int run_recover(const std::string& model_path, const std::string& input,
                const std::string& output, bool strict) {
  Model m = load_model_or_fail(model_path);
  auto raw = read_treebank(input);
  auto sents = depunct_all(raw, m.prep, nullptr, "input");
  check_relations(m, sents, strict);
  std::string out;
  long unexplained = 0;
  for (size_t i = 0; i < sents.size(); ++i) {
    PreparedSentence ps = prepare_sentence(m, sents[i], i, false);
    ViterbiResult vit = viterbi_underlying(m, ps);
    RawSentence rs;
    if (!sents[i].tree.sent_id.empty())
      rs.comments.push_back("# sent_id = " + sents[i].tree.sent_id);
    if (vit.ok) {
      rs.comments.push_back("# underlying = " +
                            bracket_string(sents[i], vit.tree, m.vocab));
    } else {
      ++unexplained;
      rs.comments.push_back("# underlying = (unexplainable)");
    }
    for (int w = 1; w <= sents[i].tree.n(); ++w) {
      const DepNode& nd = sents[i].tree.at(w);
      RawToken t;
      t.id = w;
      t.form = nd.form;
      t.upos = nd.upos;
      t.head = nd.head;
      t.deprel = nd.deprel;
      if (vit.ok) {
        auto [l, r] = vit.tree.punctemes[size_t(w - 1)];
        t.misc = "LPunct=" + misc_puncteme(m.vocab.punctemes[size_t(l)]) +
                 "|RPunct=" + misc_puncteme(m.vocab.punctemes[size_t(r)]);
      }
      rs.tokens.push_back(std::move(t));
    }
    out += write_conllu(rs);
  }
  if (unexplained) std::cerr << unexplained << " sentences unexplainable\n";
  write_output(output, out);
  return 0;
}

int run_eval_aed(const std::string& pred_path, const std::string& gold_path,
                 bool raw_mode) {
  auto pred_raw = read_treebank(pred_path);
  auto gold_raw = read_treebank(gold_path);
  PreprocessConfig prep;
  auto pred = raw_mode ? depunctuate_treebank(pred_raw)
                       : depunct_all(pred_raw, prep, nullptr, "pred");
  auto gold = raw_mode ? depunctuate_treebank(gold_raw)
                       : depunct_all(gold_raw, prep, nullptr, "gold");
  if (pred.size() != gold.size())
    throw Fail{kExitBadInput, "sentence count mismatch: " +
                                  std::to_string(pred.size()) + " vs " +
                                  std::to_string(gold.size())};
  AedAccumulator acc;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].tree.n() != gold[i].tree.n())
      throw Fail{kExitBadInput,
                 "sentence " + std::to_string(i) + ": slot count mismatch"};
    acc.add(pred[i].slots, gold[i].slots);
  }
  std::cout << "slots\tedits\taed\n"
            << acc.slots << '\t' << acc.edits << '\t' << acc.value() << '\n';
  return 0;
}

int run_eval_f05(const std::string& input_path, const std::string& system_path,
                 const std::string& gold_path) {
  PreprocessConfig prep;
  auto in_raw = read_treebank(input_path);
  auto sys_raw = read_treebank(system_path);
  auto gold_raw = read_treebank(gold_path);
  auto in = depunct_all(in_raw, prep, nullptr, "input");
  auto sys = depunct_all(sys_raw, prep, nullptr, "system");
  auto gold = depunct_all(gold_raw, prep, nullptr, "gold");
  if (in.size() != sys.size() || in.size() != gold.size())
    throw Fail{kExitBadInput, "treebank sizes differ"};
  // micro-averaged over the corpus: pool all edits with global slot offsets
  std::vector<EditRec> sys_edits, gold_edits;
  int offset = 0;
  for (size_t i = 0; i < in.size(); ++i) {
    for (auto e : edit_set(in[i].slots, sys[i].slots)) {
      e.slot += offset;
      sys_edits.push_back(std::move(e));
    }
    for (auto e : edit_set(in[i].slots, gold[i].slots)) {
      e.slot += offset;
      gold_edits.push_back(std::move(e));
    }
    offset += in[i].tree.n() + 1;
  }
  std::cout << "system_edits\tgold_edits\tf05\n"
            << sys_edits.size() << '\t' << gold_edits.size() << '\t'
            << f_half(sys_edits, gold_edits) << '\n';
  return 0;
}

int run_trigram(const std::string& train_path, const std::string& eval_path,
                double lambda) {
  auto train_raw = read_treebank(train_path);
  auto eval_raw = read_treebank(eval_path);
  auto tokens_of = [](const std::vector<RawSentence>& tb) {
    std::vector<std::vector<std::string>> out;
    out.reserve(tb.size());
    for (const auto& s : tb) {
      std::vector<std::string> sent;
      for (const auto& t : s.tokens) sent.push_back(t.form);
      out.push_back(std::move(sent));
    }
    return out;
  };
  auto train_tokens = tokens_of(train_raw);
  auto eval_tokens = tokens_of(eval_raw);
  if (eval_tokens.empty()) throw Fail{kExitNoData, "empty eval corpus"};
  TrigramLm lm = TrigramLm::train(train_tokens, lambda);
  std::cout << "train_sentences\teval_sentences\tlambda\tperplexity\n"
            << train_tokens.size() << '\t' << eval_tokens.size() << '\t'
            << lambda << '\t' << lm.perplexity(eval_tokens) << '\n';
  return 0;
}

int run_vocab(const std::string& train_path, const std::string& out_path) {
  auto raw = read_treebank(train_path);
  PreprocessConfig prep;
  auto sents = depunct_all(raw, prep, nullptr, "train");
  if (sents.empty()) throw Fail{kExitNoData, "zero usable sentences"};
  write_output(out_path, write_vocab(estimate_vocab(sents)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trainable generative model of surface punctuation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--train", ta.train_path, "training CoNLL-U file")
      ->required();
  train->add_option("--dev", ta.dev_path, "development CoNLL-U file");
  train->add_option("--out", ta.out_path, "output model path")->required();
  train->add_option("--lr", ta.cfg.learning_rate, "Adam learning rate");
  train->add_option("--batch", ta.cfg.batch_size, "batch size");
  train->add_option("--per-epoch", ta.cfg.sentences_per_epoch,
                    "sentences sampled per epoch");
  train->add_option("--epochs", ta.cfg.epochs, "number of epochs");
  train->add_option("--l2", ta.cfg.l2_coefficient, "L2 coefficient on theta");
  train->add_option("--pr", ta.cfg.pr_coefficient,
                    "posterior-regularization coefficient");
  train->add_flag("--square-pr", ta.cfg.square_pr_term,
                  "square the regularization sum");
  train->add_flag("--pr-on-prior", ta.cfg.pr_on_prior,
                  "penalize the prior-weighted unmatched count instead of the "
                  "posterior expectation");
  train->add_option("--seed", ta.cfg.seed, "random seed");
  train->add_option("--threads", ta.cfg.threads, "worker threads (0 = auto)");
  train->add_option("--direction", ta.direction,
                    "channel direction: l2r, r2l or auto")
      ->check(CLI::IsMember({"l2r", "r2l", "auto"}));
  train->add_option("--channel", ta.channel,
                    "full channel or the identity ablation")
      ->check(CLI::IsMember({"full", "identity"}));
  train->add_option("--abort-skip-rate", ta.cfg.abort_skip_rate,
                    "abort when this fraction of an epoch is unexplainable");
  train->add_option("--start-mark", ta.prep.start_mark,
                    "synthetic sentence-initial mark");
  train->add_option("--unk-threshold", ta.prep.unk_threshold,
                    "replace rarer word forms by UNK");
  train->add_flag("!--no-quote-disambiguation", ta.prep.quote_disambiguation,
                  "keep straight quotation marks");
  train->add_flag("!--no-abbreviation-split", ta.prep.abbreviation_split,
                  "keep trailing abbreviation dots attached");
  train->add_option("--final-mark", ta.final_mark,
                    "sentence-final mark for the trivial baseline");
  train->add_option("--errorful", ta.errorful_path,
                    "errorful CoNLL-U aligned with --train (correction mode)");
  train->add_option("--esl-model", ta.esl_model_path,
                    "model explaining the errorful sentences");
  train->add_option("--ref-model", ta.ref_model_path,
                    "reference model; its vocabulary is reused and its "
                    "channel anchors the correction channel");
  train->add_option("--channel-pull", ta.cfg.channel_pull,
                    "L2 pull toward the reference channel");

  std::string model_path, input, output = "-", treebank, gold, pred, sys_path;
  MbrConfig mbr;
  int threads = 0;
  bool strict = false, trivial = false, argmax = false, raw_mode = false;
  uint64_t seed = 1;
  std::string mode = "full", ordering;
  double lambda = 0.001;

  auto* inspect =
      app.add_subcommand("inspect-channel", "edit probabilities per bigram");
  inspect->add_option("--model", model_path)->required();
  inspect->add_option("--treebank", treebank,
                      "count bigram occurrences in 1-best reconstructions");
  inspect->add_option("--out", output);

  auto* ppl = app.add_subcommand("perplexity", "per-slot perplexity");
  ppl->add_option("--model", model_path)->required();
  ppl->add_option("--input", input)->required();
  ppl->add_option("--threads", threads);
  ppl->add_flag("--strict-relations", strict);

  auto* restore_cmd = app.add_subcommand("restore", "restore punctuation");
  restore_cmd->add_option("--model", model_path)->required();
  restore_cmd->add_option("--input", input)->required();
  restore_cmd->add_option("--output", output);
  restore_cmd->add_option("--samples", mbr.sample_count);
  restore_cmd->add_option("--seed", mbr.seed);
  restore_cmd->add_flag("--trivial", trivial, "final-mark-only baseline");
  restore_cmd->add_option("--threads", threads);
  restore_cmd->add_flag("--strict-relations", strict);

  std::string cesl_path, corr_path;
  auto* correct_cmd = app.add_subcommand("correct", "correct punctuation");
  correct_cmd->add_option("--esl-model", model_path)->required();
  correct_cmd->add_option("--cesl-model", cesl_path)->required();
  correct_cmd->add_option("--correction-model", corr_path)->required();
  correct_cmd->add_option("--input", input)->required();
  correct_cmd->add_option("--output", output);
  correct_cmd->add_option("--samples", mbr.sample_count);
  correct_cmd->add_option("--seed", mbr.seed);
  correct_cmd->add_option("--threads", threads);
  correct_cmd->add_flag("--strict-relations", strict);

  auto* rephrase_cmd = app.add_subcommand(
      "rephrase", "permute dependents and regenerate punctuation");
  rephrase_cmd->add_option("--model", model_path);
  rephrase_cmd->add_option("--input", input)->required();
  rephrase_cmd->add_option("--output", output);
  rephrase_cmd->add_option("--seed", seed);
  rephrase_cmd->add_option("--mode", mode, "full or base")
      ->check(CLI::IsMember({"full", "base"}));
  rephrase_cmd->add_flag("--argmax-channel", argmax);
  rephrase_cmd->add_option("--ordering", ordering, "external ordering file");

  auto* recover_cmd =
      app.add_subcommand("recover", "1-best underlying punctuation");
  recover_cmd->add_option("--model", model_path)->required();
  recover_cmd->add_option("--input", input)->required();
  recover_cmd->add_option("--output", output);
  recover_cmd->add_flag("--strict-relations", strict);

  auto* aed = app.add_subcommand("eval-aed", "edit distance per slot");
  aed->add_option("--pred", pred)->required();
  aed->add_option("--gold", gold)->required();
  aed->add_flag("--raw", raw_mode, "skip preprocessing");

  auto* f05 = app.add_subcommand("eval-f05", "F0.5 of slot edits");
  f05->add_option("--input", input)->required();
  f05->add_option("--system", sys_path)->required();
  f05->add_option("--gold", gold)->required();

  auto* tri =
      app.add_subcommand("trigram-ppl", "add-lambda trigram perplexity");
  tri->add_option("--train", treebank)->required();
  tri->add_option("--eval", input)->required();
  tri->add_option("--lambda", lambda);

  auto* voc = app.add_subcommand("vocab", "estimate and dump the vocabulary");
  voc->add_option("--train", treebank)->required();
  voc->add_option("--out", output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return run_train(ta);
    if (*inspect) return run_inspect(model_path, treebank, output);
    if (*ppl) return run_perplexity(model_path, input, threads, strict);
    if (*restore_cmd)
      return run_restore(model_path, input, output, mbr, trivial, strict,
                         threads);
    if (*correct_cmd)
      return run_correct(model_path, cesl_path, corr_path, input, output, mbr,
                         strict, threads);
    if (*rephrase_cmd)
      return run_rephrase(model_path, input, output, seed, mode, argmax,
                          ordering);
    if (*recover_cmd) return run_recover(model_path, input, output, strict);
    if (*aed) return run_eval_aed(pred, gold, raw_mode);
    if (*f05) return run_eval_f05(input, sys_path, gold);
    if (*tri) return run_trigram(treebank, input, lambda);
    if (*voc) return run_vocab(treebank, output);
  } catch (const Fail& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
