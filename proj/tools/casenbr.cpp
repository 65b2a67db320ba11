// casenbr: command-line entry point for ingestion, training, evaluation,
// prediction, synthetic corpora, embedding export and benchmarks.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "casenbr/baselines.hpp"
#include "casenbr/config.hpp"
#include "casenbr/errors.hpp"
#include "casenbr/kernels.hpp"
#include "casenbr/log.hpp"
#include "casenbr/pipeline.hpp"
#include "casenbr/synth.hpp"
#include "casenbr/train.hpp"

#ifndef CASENBR_REAL
#define CASENBR_REAL float
#endif

namespace fs = std::filesystem;
using namespace casenbr;
using Real = CASENBR_REAL;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a key, e.g. --set train.epochs=5");
  }
  [[nodiscard]] RunConfig load() const { return load_run_config(file, overrides); }
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

fs::path artifact_dir(const fs::path& out) {
  return out.has_parent_path() ? out.parent_path() : fs::path(".");
}

/// Loads a model checkpoint; the run configuration stored with it supplies
/// the split and candidate settings, with command-line overrides on top.
struct LoadedModel {
  RunConfig config;
  Dataset data;
  std::unique_ptr<CaseModel<Real>> model;
};

LoadedModel load_trained(const std::string& checkpoint, const std::string& data_path,
                         const ConfigArgs& args) {
  const auto ckpt = load_checkpoint(checkpoint);
  LoadedModel m;
  if (ckpt.manifest.contains("run")) m.config.apply(ckpt.manifest.at("run"));
  if (!args.file.empty()) m.config = load_run_config(args.file, {});
  for (const auto& o : args.overrides) m.config.set(o);
  m.config.model = ModelConfig::from_json(ckpt.manifest.at("model"));
  m.config.validate();
  m.data = prepare_dataset(load_histories(data_path), m.config);
  m.model = load_model<Real>(ckpt, m.data.vocab);
  return m;
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("'" + text + "' is not a comma-separated list of integers");
    }
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

int cmd_ingest(const std::string& input, const std::string& schema, const std::string& out_path,
               const ConfigArgs& args) {
  auto config = args.load();
  if (!schema.empty()) config.csv = schema_preset(schema);
  for (const auto& o : args.overrides)
    if (o.rfind("data.", 0) == 0) config.set(o);
  std::ifstream in(input);
  if (!in) throw DataError("cannot open " + input);
  const auto parsed = parse_transactions(in, config.csv);
  const auto built = build_histories(parsed.transactions);
  save_histories(out_path, built.histories);
  write_resolved_config(artifact_dir(out_path), config);
  const auto s = summarize(built.histories);
  std::cout << "rows_skipped " << parsed.skipped_rows << "\nusers_dropped " << built.dropped_users
            << "\nusers " << s.users << "\nitems " << s.items << "\nbaskets " << s.baskets
            << "\nbaskets_per_user " << s.baskets_per_user << "\nitems_per_basket "
            << s.items_per_basket << '\n';
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& out_dir, const ConfigArgs& args) {
  const auto config = args.load();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_resolved_config(dir, config);
  auto data = prepare_dataset(load_histories(data_path), config);
  log::info("examples: train " + std::to_string(data.train.examples.size()) + ", val " +
            std::to_string(data.val.examples.size()) + ", test " +
            std::to_string(data.test.examples.size()));
  CaseModel<Real> model(config.model, data.vocab.size(), config.init_seed());
  const auto run = config.to_json();
  const auto save = [&](const fs::path& path, const CaseModel<Real>& m) {
    auto ckpt = model_checkpoint(m, data.vocab);
    ckpt.manifest["run"] = run;
    save_checkpoint(path, ckpt);
  };
  const auto result = train<Real>(
      model, data.train.examples, data.val.examples, config.train,
      [&](const EpochLog& e, const CaseModel<Real>& m) {
        std::ostringstream name;
        name << "epoch_" << std::setw(3) << std::setfill('0') << e.epoch << ".ckpt";
        save(dir / name.str(), m);
      });
  save(dir / "best.ckpt", model);
  auto log_out = open_out(dir / "train_log.csv");
  write_train_log(log_out, result.log);
  std::cout << "best_epoch " << result.best_epoch << "\n" << config.train.selection_metric << ' '
            << result.best_metric << "\nsteps " << result.steps << '\n';
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& checkpoint,
             const std::string& baseline, const std::string& truth_path, const std::string& ks_text,
             const std::string& part, const std::string& out_path, const ConfigArgs& args) {
  if (checkpoint.empty() == baseline.empty())
    throw ConfigError("give exactly one of --checkpoint or --baseline");
  LoadedModel loaded;
  std::unique_ptr<Ranker> ranker;
  std::unique_ptr<TifuIndex> tifu;
  std::vector<PlantedCadence> truth;
  if (!checkpoint.empty()) {
    loaded = load_trained(checkpoint, data_path, args);
    ranker = std::make_unique<CaseRanker<Real>>(*loaded.model, loaded.config.eval_batch_size);
  } else {
    loaded.config = args.load();
    loaded.data = prepare_dataset(load_histories(data_path), loaded.config);
    if (baseline == "personal_top") {
      ranker = std::make_unique<PersonalTopRanker>();
    } else if (baseline == "tifuknn") {
      tifu = std::make_unique<TifuIndex>(loaded.data.histories, loaded.data.split.train,
                                         loaded.data.vocab, loaded.config.tifu);
      ranker = std::make_unique<TifuRanker>(*tifu, loaded.data.histories, loaded.data.vocab);
    } else if (baseline == "due_oracle") {
      if (truth_path.empty()) throw ConfigError("--baseline due_oracle needs --truth");
      std::ifstream in(truth_path);
      if (!in) throw DataError("cannot open " + truth_path);
      truth = read_truth_csv(in);
      ranker = std::make_unique<DueDateRanker>(truth, loaded.data.vocab);
    } else {
      throw ConfigError("unknown baseline '" + baseline +
                        "' (expected personal_top, tifuknn or due_oracle)");
    }
  }
  const auto ks = ks_text.empty() ? loaded.config.ks : parse_list(ks_text);
  const auto& examples = loaded.data.part(part).examples;
  const auto report = evaluate(*ranker, examples, ks);
  const std::pair<std::string, EvalReport> row{ranker->name(), report};
  std::cout << format_table(std::span(&row, 1)) << "evaluated " << report.evaluated << ", skipped "
            << report.skipped << '\n';
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    write_report_csv(out, report);
    write_resolved_config(artifact_dir(out_path), loaded.config);
  }
  return 0;
}

int cmd_predict(const std::string& data_path, const std::string& checkpoint,
                const std::string& user, Day as_of, std::size_t k, const ConfigArgs& args) {
  auto loaded = load_trained(checkpoint, data_path, args);
  const UserHistory* history = nullptr;
  for (const auto& h : loaded.data.histories)
    if (h.user_id == user) history = &h;
  if (!history) throw DataError("unknown user " + user);
  const auto query =
      build_query(*history, as_of, {}, loaded.data.vocab, loaded.config.example_options());
  if (!query) throw DataError("user " + user + " has no purchases before day " + std::to_string(as_of));
  const auto scores = loaded.model->score(std::span(&*query, 1)).front();
  const auto order = rank_candidates(scores, *query, k);
  std::cout << "rank\titem\tscore\n";
  for (std::size_t r = 0; r < order.size(); ++r)
    std::cout << r + 1 << '\t' << loaded.data.vocab.item(query->candidates[order[r]]) << '\t'
              << std::setprecision(6) << scores[order[r]] << '\n';
  return 0;
}

int cmd_synth(const std::string& out_dir, const ConfigArgs& args) {
  const auto config = args.load();
  const fs::path dir(out_dir);
  const auto corpus = generate(config.synth);
  save_histories(dir / "histories.tsv", corpus.histories);
  auto truth = open_out(dir / "truth.csv");
  write_truth_csv(truth, corpus.truth);
  write_resolved_config(dir, config);
  const auto s = summarize(corpus.histories);
  std::cout << "users " << s.users << "\nitems " << s.items << "\nbaskets " << s.baskets << '\n';
  return 0;
}

int cmd_export(const std::string& data_path, const std::string& checkpoint, const std::string& part,
               const std::string& out_path, const ConfigArgs& args) {
  auto loaded = load_trained(checkpoint, data_path, args);
  const auto& examples = loaded.data.part(part).examples;
  const auto& cfg = loaded.model->config();
  auto out = open_out(out_path);
  out << "user,item,label";
  for (std::size_t i = 0; i < cfg.cadence_dim; ++i) out << ",c" << i;
  for (std::size_t i = 0; i < cfg.hidden_dim; ++i) out << ",z" << i;
  out << '\n';
  Rng unused(0);
  const std::size_t bs = loaded.config.eval_batch_size;
  for (std::size_t at = 0; at < examples.size(); at += bs) {
    const auto chunk = std::span(examples).subspan(at, std::min(bs, examples.size() - at));
    const auto batch = collate<Real>(chunk);
    ad::Graph<Real> g(false);
    const auto res = loaded.model->forward(g, batch, unused, false);
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      for (std::size_t i = 0; i < chunk[s].size(); ++i) {
        const std::size_t row = batch.offsets[s] + i;
        out << chunk[s].user_id << ',' << loaded.data.vocab.item(chunk[s].candidates[i]) << ','
            << int(chunk[s].labels[i]) << std::setprecision(7);
        for (auto v : res.cadence->value.row(row)) out << ',' << v;
        for (auto v : res.encoded->value.row(row)) out << ',' << v;
        out << '\n';
      }
    }
  }
  return 0;
}

int cmd_bench(const std::string& pops_text, std::size_t queries, std::size_t repeats,
              const std::string& checkpoint, const std::string& out_path, const ConfigArgs& args) {
  auto config = args.load();
  const auto pops = parse_list(pops_text);
  auto spec = config.synth;
  spec.n_users = pops.back() + queries;
  log::info("generating " + std::to_string(spec.n_users) + " synthetic users");
  auto corpus = generate(spec);
  const auto vocab = build_vocabulary(corpus.histories);
  std::vector<std::size_t> query_users;
  for (std::size_t u = pops.back(); u < spec.n_users; ++u) query_users.push_back(u);
  const auto qs = build_example_set(corpus.histories, query_users, vocab, config.example_options());

  std::unique_ptr<CaseModel<Real>> model;
  if (!checkpoint.empty()) {
    model = load_model<Real>(load_checkpoint(checkpoint), vocab);
  } else {
    model = std::make_unique<CaseModel<Real>>(config.model, vocab.size(), config.init_seed());
  }
  CaseRanker<Real> case_ranker(*model, config.eval_batch_size);
  std::vector<std::unique_ptr<TifuIndex>> indices;
  const auto make_tifu = [&](std::size_t pop) -> std::unique_ptr<Ranker> {
    std::vector<std::size_t> users(pop);
    for (std::size_t u = 0; u < pop; ++u) users[u] = u;
    indices.push_back(std::make_unique<TifuIndex>(corpus.histories, users, vocab, config.tifu));
    return std::make_unique<TifuRanker>(*indices.back(), corpus.histories, vocab);
  };
  const auto rows = bench_inference(case_ranker, make_tifu, qs.examples, pops, 10, repeats);
  std::ostringstream csv;
  csv << "ranker,population,queries,seconds_per_query\n";
  for (const auto& r : rows)
    csv << r.ranker << ',' << r.population << ',' << r.queries << ',' << std::setprecision(6)
        << r.seconds_per_query << '\n';
  std::cout << csv.str();
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    out << csv.str();
    write_resolved_config(artifact_dir(out_path), config);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cadence-aware next-basket repurchase recommendation"};
  app.require_subcommand(1);
  int threads = 0;
  bool quiet = false;
  app.add_option("--threads", threads, "Maximum worker threads (0: runtime default)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", quiet, "Only print warnings and results");

  ConfigArgs cfg;
  std::string input, schema, out, data, checkpoint, baseline, truth, ks, part = "test", user,
                                                                      pops = "10000,20000,40000";
  Day as_of = 0;
  std::size_t k = 10, queries = 200, repeats = 3;

  auto* ingest = app.add_subcommand("ingest", "Parse a transaction CSV into a history file");
  ingest->add_option("--input", input, "Transaction CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--schema", schema, "Column preset")
      ->check(CLI::IsMember({"absolute", "gap", "tafeng"}));
  ingest->add_option("--out", out, "History file to write")->required();
  cfg.attach(ingest);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
  train_cmd->add_option("--data", data, "History file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Output directory")->required();
  cfg.attach(train_cmd);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline");
  eval->add_option("--data", data, "History file")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--baseline", baseline, "personal_top, tifuknn or due_oracle");
  eval->add_option("--truth", truth, "Planted cadence table for due_oracle")
      ->check(CLI::ExistingFile);
  eval->add_option("--ks", ks, "Cutoffs, e.g. 1,3,5,10");
  eval->add_option("--split", part, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", out, "Report CSV");
  cfg.attach(eval);

  auto* predict = app.add_subcommand("predict", "Rank one user's items as of a given day");
  predict->add_option("--data", data, "History file")->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--user", user, "User id")->required();
  predict->add_option("--as-of-day", as_of, "Query day; purchases before it are visible")
      ->required();
  predict->add_option("--k", k, "List length")->check(CLI::PositiveNumber);
  cfg.attach(predict);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted cadences");
  synth->add_option("--spec", cfg.file, "JSON file with synth.* keys")->check(CLI::ExistingFile);
  synth->add_option("--set", cfg.overrides, "Override a key, e.g. --set synth.n_users=500");
  synth->add_option("--out", out, "Output directory")->required();

  auto* exp = app.add_subcommand("export-emb", "Write per-candidate c and z vectors as CSV");
  exp->add_option("--data", data, "History file")->required()->check(CLI::ExistingFile);
  exp->add_option("--checkpoint", checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  exp->add_option("--split", part, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  exp->add_option("--out", out, "CSV to write")->required();
  cfg.attach(exp);

  auto* bench = app.add_subcommand("bench", "Per-query inference time against population size");
  bench->add_option("--populations", pops, "Ascending neighbor population sizes");
  bench->add_option("--queries", queries, "Query users")->check(CLI::PositiveNumber);
  bench->add_option("--repeats", repeats, "Timing repetitions (best is kept)")
      ->check(CLI::PositiveNumber);
  bench->add_option("--checkpoint", checkpoint, "Model checkpoint (default: fresh model)")
      ->check(CLI::ExistingFile);
  bench->add_option("--out", out, "Timing CSV");
  cfg.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) kernels::set_threads(threads);
    if (quiet) log::set_level(log::Level::warn);
    if (*ingest) return cmd_ingest(input, schema, out, cfg);
    if (*train_cmd) return cmd_train(data, out, cfg);
    if (*eval) return cmd_eval(data, checkpoint, baseline, truth, ks, part, out, cfg);
    if (*predict) return cmd_predict(data, checkpoint, user, as_of, k, cfg);
    if (*synth) return cmd_synth(out, cfg);
    if (*exp) return cmd_export(data, checkpoint, part, out, cfg);
    if (*bench) return cmd_bench(pops, queries, repeats, checkpoint, out, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
