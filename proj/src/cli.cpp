#include "boxgnn/cli.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "boxgnn/checkpoint.hpp"
#include "boxgnn/parallel.hpp"
#include "boxgnn/propagation.hpp"

namespace boxgnn::cli {

namespace fs = std::filesystem;

namespace {

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / kManifestFile : p; }

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw IoError(what + " path is empty");
  if (!fs::exists(p)) throw IoError(what + " not found: " + p.string());
  if (fs::is_directory(p)) throw IoError(what + " is a directory: " + p.string());
}

void ensure_dir(const fs::path& p) {
  if (p.empty()) throw IoError("output directory path is empty");
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create output directory " + p.string());
}

std::string ablation_label(const TrainConfig& cfg) {
  if (cfg.layers == 0 && !cfg.gumbel) return "w/o GNN, w/o Gumbel";
  if (cfg.layers == 0) return "w/o GNN";
  if (!cfg.gumbel) return "w/o Gumbel";
  return "none";
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + p.string());
}

void print_metrics(std::ostream& out, const std::string& split, const RankingResult& r) {
  out << split << ": users " << r.users_evaluated;
  for (std::size_t n = 0; n < r.ks.size(); ++n) out << "  recall@" << r.ks[n] << " " << fmt(r.recall[n]);
  for (std::size_t n = 0; n < r.ks.size(); ++n) out << "  ndcg@" << r.ks[n] << " " << fmt(r.ndcg[n]);
  out << '\n';
}

struct Loaded {
  Dataset dataset;
  Checkpoint checkpoint;
  TrainConfig config;
};

Loaded load_pair(const fs::path& manifest, const fs::path& checkpoint) {
  const fs::path mpath = manifest_path(manifest);
  require_file(mpath, "manifest");
  require_file(checkpoint, "checkpoint");
  Loaded l{load_manifest(mpath), load_checkpoint(checkpoint), {}};
  const std::string expect = l.dataset.vocab_hash();
  if (l.checkpoint.vocab_hash != expect) {
    throw MismatchError("vocabulary hash mismatch: checkpoint has " + l.checkpoint.vocab_hash + ", manifest has " +
                        expect);
  }
  const NodeCounts a = l.checkpoint.params.counts(), b = l.dataset.counts();
  if (a.users != b.users || a.items != b.items || a.tags != b.tags) {
    throw MismatchError("checkpoint table sizes do not match the manifest vocabulary");
  }
  l.config = config_from_json(l.checkpoint.config);
  return l;
}

ModelParams copy_params(const ModelParams& p) { return p; }

}  // namespace

nlohmann::json config_to_json(const TrainConfig& cfg) {
  return {{"dim", cfg.dim},
          {"layers", cfg.layers},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.learning_rate},
          {"reg", cfg.lambda},
          {"dropout", cfg.dropout},
          {"beta", cfg.beta},
          {"gumbel", cfg.gumbel},
          {"epochs", cfg.epochs},
          {"eval_every", cfg.eval_every},
          {"patience", cfg.patience},
          {"seed", cfg.seed},
          {"ablation", ablation_label(cfg)}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.dim = j.value("dim", c.dim);
  c.layers = j.value("layers", c.layers);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("lr", c.learning_rate);
  c.lambda = j.value("reg", c.lambda);
  c.dropout = j.value("dropout", c.dropout);
  c.beta = j.value("beta", c.beta);
  c.gumbel = j.value("gumbel", c.gumbel);
  c.epochs = j.value("epochs", c.epochs);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  return c;
}

PrepareSummary cmd_prepare(const PrepareOptions& options, std::ostream& out) {
  require_file(options.dataset, "dataset");
  if (options.min_tag_count == 0) throw ConfigError("min-tag-count", "must be at least 1");
  ensure_dir(options.out);

  const auto raw = load_hetrec(options.dataset);
  const auto kept = filter_tags(raw, options.min_tag_count);
  if (kept.size() < 3) throw FormatError(0, "too few assignments left after tag filtering (" + std::to_string(kept.size()) + ")");
  const Dataset ds = split_dataset(kept, SplitRatios{}, options.seed);

  PrepareSummary s;
  s.raw_records = raw.size();
  s.kept_records = kept.size();
  s.counts = ds.counts();
  s.train = ds.train.size();
  s.validation = ds.validation.size();
  s.test = ds.test.size();
  s.manifest = options.out / kManifestFile;

  const nlohmann::json meta = {{"source", options.dataset.filename().string()},
                               {"min_tag_count", options.min_tag_count},
                               {"seed", options.seed},
                               {"raw_records", s.raw_records},
                               {"assignments", s.kept_records}};
  save_manifest(s.manifest, ds, meta);

  out << "users " << s.counts.users << "\nitems " << s.counts.items << "\ntags " << s.counts.tags << "\nassignments "
      << s.kept_records << " (of " << s.raw_records << " raw)\ntrain " << s.train << "\nvalidation " << s.validation
      << "\ntest " << s.test << "\nmanifest " << s.manifest.string() << '\n';
  return s;
}

TrainOutcome cmd_train(const TrainOptions& options, std::ostream& out) {
  TrainConfig cfg = options.config;
  if (options.no_gnn) cfg.layers = 0;
  cfg.validate();
  const fs::path mpath = manifest_path(options.manifest);
  require_file(mpath, "manifest");
  ensure_dir(options.out);
  if (options.deterministic) parallel::set_max_threads(1);

  const Dataset ds = load_manifest(mpath);
  const NodeCounts counts = ds.counts();
  const auto graph = build_ctg(ds.train, counts);
  const UserItemSets validation = ds.relevant(Split::kValidation);
  const UserItemSets test = ds.relevant(Split::kTest);
  const nlohmann::json cfg_json = config_to_json(cfg);
  const std::string cfg_line = "# config: " + cfg_json.dump() + "\n";

  std::mt19937_64 rng(cfg.seed);
  ModelParams params = init_params(counts, cfg, rng);
  AdamOptimizer optimizer(params, cfg.learning_rate);
  EarlyStopping stopping(cfg.patience);
  EvalOptions eval_opts;
  eval_opts.layers = cfg.layers;
  eval_opts.scoring = cfg.scoring();

  std::ofstream train_log(options.out / kTrainLogFile, std::ios::trunc);
  std::ofstream eval_log(options.out / kEvalLogFile, std::ios::trunc);
  if (!train_log || !eval_log) throw IoError("cannot write logs under " + options.out.string());
  train_log << cfg_line << "epoch,loss,batches\n";
  eval_log << cfg_line << "epoch,split,recall@10,recall@20,ndcg@10,ndcg@20,users,best\n";

  out << "training " << counts.users << " users, " << counts.items << " items, " << counts.tags << " tags; ablation "
      << ablation_label(cfg) << ", L = " << cfg.layers << ", d = " << cfg.dim << '\n';

  TrainOutcome outcome;
  outcome.checkpoint = options.out / kCheckpointFile;
  ModelParams best = copy_params(params);
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochStats stats = train_epoch(params, graph, ds.train_positives, cfg, optimizer, rng);
    outcome.epoch_losses.push_back(stats.mean_loss);
    train_log << epoch << ',' << std::setprecision(17) << stats.mean_loss << ',' << stats.batches << '\n';
    if (epoch % cfg.eval_every != 0) continue;

    RankingResult r = evaluate(params, graph, ds.train_positives, validation, eval_opts);
    const StopDecision d = stopping.step(r.recall_at(20));
    if (d.new_best) {
      best = copy_params(params);
      best_epoch = epoch;
    }
    eval_log << epoch << ",validation," << std::setprecision(17) << r.recall_at(10) << ',' << r.recall_at(20) << ','
             << r.ndcg_at(10) << ',' << r.ndcg_at(20) << ',' << r.users_evaluated << ',' << (d.new_best ? 1 : 0)
             << '\n';
    out << "epoch " << epoch << "  loss " << fmt(stats.mean_loss) << "  val recall@20 " << fmt(r.recall_at(20))
        << (d.new_best ? "  *" : "") << '\n';
    outcome.evaluations.emplace_back(epoch, std::move(r));
    if (d.stop) {
      out << "early stop at epoch " << epoch << " (best " << best_epoch << ")\n";
      break;
    }
  }
  // Without any validation pass there is no "best"; keep the final state.
  if (outcome.evaluations.empty()) {
    best = copy_params(params);
    best_epoch = outcome.epoch_losses.size();
  }
  outcome.best_epoch = best_epoch;
  outcome.best_validation_recall20 = outcome.evaluations.empty() ? 0.0 : stopping.best();

  Checkpoint ckpt{cfg_json, ds.vocab_hash(), cfg.seed, best_epoch, std::move(best)};
  save_checkpoint(outcome.checkpoint, ckpt);

  outcome.test = evaluate(ckpt.params, graph, ds.train_positives, test, eval_opts);
  nlohmann::json report = metrics_report(outcome.test, "test", cfg_json, false);
  report["epoch"] = best_epoch;
  write_json(options.out / "metrics_test.json", report);
  print_metrics(out, "test (epoch " + std::to_string(best_epoch) + ")", outcome.test);
  return outcome;
}

RankingResult cmd_evaluate(const EvaluateOptions& options, std::ostream& out) {
  if (!options.out.empty()) ensure_dir(options.out);
  Loaded l = load_pair(options.manifest, options.checkpoint);
  if (options.per_user && l.dataset.users.size() == 0) throw FormatError(0, "empty user vocabulary");
  const auto graph = build_ctg(l.dataset.train, l.dataset.counts());
  EvalOptions eval_opts;
  eval_opts.layers = l.checkpoint.params.layers();
  eval_opts.scoring = l.config.scoring();
  const RankingResult r =
      evaluate(l.checkpoint.params, graph, l.dataset.train_positives, l.dataset.relevant(options.split), eval_opts);
  const std::string label = split_name(options.split);
  print_metrics(out, label, r);
  if (!options.out.empty()) {
    nlohmann::json report = metrics_report(r, label, l.checkpoint.config, options.per_user);
    report["epoch"] = l.checkpoint.epoch;
    if (options.per_user) {
      for (auto& row : report["per_user"]) {
        row["user"] = l.dataset.users.raw(row["user"].get<std::uint32_t>());
        nlohmann::json top = nlohmann::json::array();
        for (const auto& i : row["top"]) top.push_back(l.dataset.items.raw(i.get<std::uint32_t>()));
        row["top"] = top;
      }
    }
    write_json(options.out / ("metrics_" + label + ".json"), report);
  }
  return r;
}

std::vector<std::pair<std::string, double>> cmd_recommend(const RecommendOptions& options, std::ostream& out) {
  if (options.top_k == 0) throw ConfigError("top-k", "must be at least 1");
  Loaded l = load_pair(options.manifest, options.checkpoint);
  const auto user = l.dataset.users.find(options.user);
  if (!user) throw NotFoundError("user '" + options.user + "' not found in the manifest vocabulary");
  const auto graph = build_ctg(l.dataset.train, l.dataset.counts());
  const LayerState state = propagate(l.checkpoint.params, GraphView(graph), l.checkpoint.params.layers());
  std::vector<double> scores;
  const auto order = rank_all(*user, state, l.dataset.counts(), l.dataset.train_positives, l.config.scoring(), &scores);
  std::vector<std::pair<std::string, double>> top;
  for (std::size_t p = 0; p < std::min(options.top_k, order.size()); ++p) {
    top.emplace_back(l.dataset.items.raw(order[p]), scores[order[p]]);
  }
  out << "rank\titem\tscore\n";
  for (std::size_t p = 0; p < top.size(); ++p) {
    out << p + 1 << '\t' << top[p].first << '\t' << std::setprecision(10) << top[p].second << '\n';
  }
  return top;
}

namespace {

// key = value lines; '#' starts a comment. Keys are flag names without dashes.
std::map<std::string, std::string> read_config_file(const fs::path& p) {
  require_file(p, "config file");
  std::ifstream in(p);
  if (!in) throw IoError("cannot open config file " + p.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(line_no, "config file " + p.string() + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(key, "expected a boolean, got '" + text + "'");
  } else if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, fs::path>) {
    return T(text);
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      throw ConfigError(key, "cannot parse '" + text + "'");
    }
    return v;
  }
}

// Binds a flag to a variable and remembers how to fill it from a config file
// when the flag itself is absent.
class Binder {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& key, T& target, const std::string& help) {
    CLI::Option* opt;
    if constexpr (std::is_same_v<T, bool>) {
      opt = app->add_flag("--" + key, target, help);
    } else {
      opt = app->add_option("--" + key, target, help);
    }
    fill_.push_back([opt, key, &target](const std::map<std::string, std::string>& kv) {
      const auto it = kv.find(key);
      if (it != kv.end() && opt->count() == 0) target = parse_value<T>(key, it->second);
    });
    keys_.push_back(key);
    return opt;
  }

  void apply(const std::map<std::string, std::string>& kv) const {
    for (const auto& [key, value] : kv) {
      if (std::find(keys_.begin(), keys_.end(), key) == keys_.end()) {
        throw ConfigError(key, "unknown key in config file");
      }
    }
    for (const auto& f : fill_) f(kv);
  }

 private:
  std::vector<std::function<void(const std::map<std::string, std::string>&)>> fill_;
  std::vector<std::string> keys_;
};

int fail(std::ostream& err, const std::string& msg, int code) {
  std::string line = msg;
  std::replace(line.begin(), line.end(), '\n', ' ');
  err << "boxgnn: error: " << line << '\n';
  return code;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"BoxGNN tag-aware recommender"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "Parse a HetRec tag-assignment file into a dataset manifest");
  prepare->add_option("--dataset", prep.dataset, "HetRec user_taggedmovies file")->required();
  prepare->add_option("--out", prep.out, "Output directory")->required();
  prepare->add_option("--min-tag-count", prep.min_tag_count, "Keep tags used at least this many times");
  prepare->add_option("--seed", prep.seed, "Split shuffle seed");

  TrainOptions tr;
  fs::path train_config;
  Binder binder;
  std::size_t dim = static_cast<std::size_t>(tr.config.dim);
  bool no_gumbel = false;
  auto* train = app.add_subcommand("train", "Train a model and write the best checkpoint");
  train->add_option("--dataset", tr.manifest, "Dataset manifest (file or directory)")->required();
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--config", train_config, "key = value file; flags on the command line take precedence");
  binder.add(train, "dim", dim, "Embedding dimension d");
  binder.add(train, "layers", tr.config.layers, "Propagation layers L");
  binder.add(train, "beta", tr.config.beta, "Gumbel scale");
  binder.add(train, "lr", tr.config.learning_rate, "Adam learning rate");
  binder.add(train, "reg", tr.config.lambda, "L2 regularization weight");
  binder.add(train, "dropout", tr.config.dropout, "Node dropout ratio");
  binder.add(train, "batch-size", tr.config.batch_size, "Triples per batch");
  binder.add(train, "seed", tr.config.seed, "Random seed");
  binder.add(train, "epochs", tr.config.epochs, "Maximum epochs");
  binder.add(train, "eval-every", tr.config.eval_every, "Validation interval in epochs");
  binder.add(train, "patience", tr.config.patience, "Early-stopping patience in evaluations");
  binder.add(train, "no-gnn", tr.no_gnn, "Ablation: no propagation (L = 0)");
  binder.add(train, "no-gumbel", no_gumbel, "Ablation: hard-volume scoring");
  binder.add(train, "deterministic", tr.deterministic, "Single-threaded execution");

  EvaluateOptions ev;
  bool ev_det = false;
  std::string ev_split = "test";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Rank all items and report Recall/NDCG@{10,20}");
  evaluate_cmd->add_option("--dataset", ev.manifest, "Dataset manifest")->required();
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  evaluate_cmd->add_option("--split", ev_split, "train, validation or test");
  evaluate_cmd->add_option("--out", ev.out, "Directory for metrics_<split>.json");
  evaluate_cmd->add_flag("--per-user", ev.per_user, "Include per-user rows in the report");
  evaluate_cmd->add_flag("--deterministic", ev_det, "Single-threaded execution");

  RecommendOptions rec;
  auto* recommend = app.add_subcommand("recommend", "Print a user's top-K items");
  recommend->add_option("--dataset", rec.manifest, "Dataset manifest")->required();
  recommend->add_option("--checkpoint", rec.checkpoint, "Checkpoint file")->required();
  recommend->add_option("--user", rec.user, "Raw user id")->required();
  recommend->add_option("--top-k", rec.top_k, "Number of items");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(err, e.what(), 2);
  }

  try {
    if (prepare->parsed()) {
      cmd_prepare(prep, out);
    } else if (train->parsed()) {
      if (!train_config.empty()) binder.apply(read_config_file(train_config));
      tr.config.dim = static_cast<Eigen::Index>(dim);
      tr.config.gumbel = !no_gumbel;
      cmd_train(tr, out);
    } else if (evaluate_cmd->parsed()) {
      ev.split = parse_split(ev_split);
      if (ev_det) parallel::set_max_threads(1);
      cmd_evaluate(ev, out);
    } else if (recommend->parsed()) {
      cmd_recommend(rec, out);
    }
  } catch (const ConfigError& e) {
    return fail(err, std::string("invalid config: ") + e.what(), 2);
  } catch (const std::exception& e) {
    return fail(err, e.what(), 1);
  }
  return 0;
}

}  // namespace boxgnn::cli
