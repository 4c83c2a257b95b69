#pragma once

// Command implementations behind the `boxgnn` executable. Each cmd_* throws
// on failure; run_cli() turns exceptions into a one-line diagnostic and a
// nonzero exit status.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "boxgnn/data.hpp"
#include "boxgnn/eval.hpp"
#include "boxgnn/training.hpp"

namespace boxgnn::cli {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kTrainLogFile = "train_log.csv";
constexpr const char* kEvalLogFile = "eval_log.csv";

/// Checkpoint/manifest pairing failure.
class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PrepareOptions {
  std::filesystem::path dataset;
  std::filesystem::path out;
  std::size_t min_tag_count = 5;
  std::uint64_t seed = 2024;
};

struct PrepareSummary {
  std::size_t raw_records = 0;
  std::size_t kept_records = 0;
  NodeCounts counts;
  std::size_t train = 0, validation = 0, test = 0;
  std::filesystem::path manifest;
};

PrepareSummary cmd_prepare(const PrepareOptions& options, std::ostream& out);

struct TrainOptions {
  std::filesystem::path manifest;
  std::filesystem::path out;
  TrainConfig config;
  bool no_gnn = false;
  bool deterministic = false;
};

struct TrainOutcome {
  std::vector<double> epoch_losses;
  std::vector<std::pair<std::size_t, RankingResult>> evaluations;  // (epoch, validation result)
  std::size_t best_epoch = 0;
  double best_validation_recall20 = 0.0;
  RankingResult test;  // best checkpoint on the test split
  std::filesystem::path checkpoint;
};

TrainOutcome cmd_train(const TrainOptions& options, std::ostream& out);

struct EvaluateOptions {
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  Split split = Split::kTest;
  bool per_user = false;
};

RankingResult cmd_evaluate(const EvaluateOptions& options, std::ostream& out);

struct RecommendOptions {
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::string user;
  std::size_t top_k = 10;
};

std::vector<std::pair<std::string, double>> cmd_recommend(const RecommendOptions& options, std::ostream& out);

nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

/// Entry point for the executable; returns the process exit status.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace boxgnn::cli
