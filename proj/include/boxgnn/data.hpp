#pragma once

// HetRec tag-assignment ingestion, infrequent-tag filtering, vocabularies and
// the seeded train / validation / test split over assignments.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "boxgnn/graph.hpp"
#include "boxgnn/training.hpp"

namespace boxgnn {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input; line() is 1-based, 0 when not tied to a line.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RawRecord {
  std::string user;
  std::string item;
  std::string tag;

  bool operator==(const RawRecord&) const = default;
};

/// Header line, then tab-separated rows whose first three columns are
/// (userID, itemID, tagID). Further columns (timestamps, dates) are ignored.
std::vector<RawRecord> parse_hetrec(std::istream& in);
std::vector<RawRecord> load_hetrec(const std::filesystem::path& path);

/// Drops every record whose tag occurs fewer than min_count times. One pass.
std::vector<RawRecord> filter_tags(std::span<const RawRecord> records, std::size_t min_count = 5);

/// Raw id <-> dense index, indices assigned in first-appearance order.
class Vocabulary {
 public:
  std::uint32_t intern(const std::string& raw);
  std::optional<std::uint32_t> find(const std::string& raw) const;
  const std::string& raw(std::uint32_t index) const { return ids_[index]; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

enum class Split { kTrain, kValidation, kTest };

Split parse_split(const std::string& name);
std::string split_name(Split split);

struct Dataset {
  Vocabulary users, items, tags;
  std::vector<Assignment> train, validation, test;
  UserItemSets train_positives;

  NodeCounts counts() const { return {users.size(), items.size(), tags.size()}; }
  const std::vector<Assignment>& split(Split s) const;
  /// Distinct (user, item) pairs of a split: the relevance judgments.
  UserItemSets relevant(Split s) const;
  std::string vocab_hash() const;
};

/// Seeded shuffle then contiguous slicing: floor(ratio * n) records each for
/// validation and test, the remainder for training. Throws
/// std::invalid_argument for fewer than 3 records or ratios not summing to 1.
Dataset split_dataset(std::span<const RawRecord> records, SplitRatios ratios, std::uint64_t seed);

/// FNV-1a 64 over the three vocabularies, as 16 hex digits.
std::string vocabulary_hash(const Vocabulary& users, const Vocabulary& items, const Vocabulary& tags);

/// JSON manifest: vocabularies, split assignment lists ([user, tag, item]
/// index triples), the vocabulary hash and caller metadata under "meta".
void save_manifest(const std::filesystem::path& path, const Dataset& dataset, const nlohmann::json& meta);
Dataset load_manifest(const std::filesystem::path& path);

}  // namespace boxgnn
