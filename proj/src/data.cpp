#include "boxgnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace boxgnn {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

bool is_integer(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

nlohmann::json assignments_to_json(const std::vector<Assignment>& list) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : list) out.push_back({a.user, a.tag, a.item});
  return out;
}

std::vector<Assignment> assignments_from_json(const nlohmann::json& j, const NodeCounts& counts) {
  std::vector<Assignment> out;
  out.reserve(j.size());
  for (const auto& row : j) {
    Assignment a{row.at(0).get<std::uint32_t>(), row.at(1).get<std::uint32_t>(), row.at(2).get<std::uint32_t>()};
    if (a.user >= counts.users || a.tag >= counts.tags || a.item >= counts.items) {
      throw FormatError(0, "manifest: assignment index out of range");
    }
    out.push_back(a);
  }
  return out;
}

std::vector<Edge> user_item_pairs(const std::vector<Assignment>& list) {
  std::vector<Edge> pairs;
  pairs.reserve(list.size());
  for (const auto& a : list) pairs.emplace_back(a.user, a.item);
  return pairs;
}

}  // namespace

std::vector<RawRecord> parse_hetrec(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(1, "missing header line");
  strip_cr(line);
  const auto header = split_tabs(line);
  if (header.size() < 3 || lower(header[0]) != "userid" || lower(header[2]) != "tagid") {
    throw FormatError(1, "malformed header, expected 'userID<TAB>itemID<TAB>tagID...', got '" + line + "'");
  }

  std::vector<RawRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() < 3) throw FormatError(line_no, "expected at least 3 tab-separated columns");
    static constexpr const char* kColumns[] = {"user", "item", "tag"};
    for (std::size_t c = 0; c < 3; ++c) {
      if (!is_integer(fields[c])) {
        throw FormatError(line_no, std::string("non-numeric ") + kColumns[c] + " column '" + fields[c] + "'");
      }
    }
    records.push_back(RawRecord{std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
  }
  return records;
}

std::vector<RawRecord> load_hetrec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_hetrec(in);
}

std::vector<RawRecord> filter_tags(std::span<const RawRecord> records, std::size_t min_count) {
  if (min_count == 0) throw std::invalid_argument("filter_tags: min_count must be at least 1");
  std::unordered_map<std::string, std::size_t> uses;
  for (const auto& r : records) ++uses[r.tag];
  std::vector<RawRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (uses[r.tag] >= min_count) out.push_back(r);
  }
  return out;
}

std::uint32_t Vocabulary::intern(const std::string& raw) {
  const auto [it, inserted] = index_.try_emplace(raw, static_cast<std::uint32_t>(ids_.size()));
  if (inserted) ids_.push_back(raw);
  return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(const std::string& raw) const {
  const auto it = index_.find(raw);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation" || name == "valid" || name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, validation or test)");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "";
}

const std::vector<Assignment>& Dataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValidation: return validation;
    case Split::kTest: return test;
  }
  return test;
}

UserItemSets Dataset::relevant(Split s) const {
  const auto pairs = user_item_pairs(split(s));
  return UserItemSets::from_pairs(users.size(), items.size(), pairs);
}

std::string Dataset::vocab_hash() const { return vocabulary_hash(users, items, tags); }

std::string vocabulary_hash(const Vocabulary& users, const Vocabulary& items, const Vocabulary& tags) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const Vocabulary* v : {&users, &items, &tags}) {
    for (const auto& id : v->ids()) {
      for (unsigned char c : id) mix(c);
      mix(0x1f);
    }
    mix(0x1e);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset split_dataset(std::span<const RawRecord> records, SplitRatios ratios, std::uint64_t seed) {
  if (records.size() < 3) throw std::invalid_argument("split_dataset: need at least 3 records");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split_dataset: ratios must be non-negative and sum to 1");
  }
  Dataset ds;
  std::vector<Assignment> all;
  all.reserve(records.size());
  for (const auto& r : records) {
    const auto u = ds.users.intern(r.user);
    const auto i = ds.items.intern(r.item);
    const auto t = ds.tags.intern(r.tag);
    all.push_back(Assignment{u, t, i});
  }

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double n = static_cast<double>(all.size());
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * n));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n));
  const std::size_t n_train = all.size() - n_val - n_test;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Assignment& a = all[order[k]];
    if (k < n_train) {
      ds.train.push_back(a);
    } else if (k < n_train + n_val) {
      ds.validation.push_back(a);
    } else {
      ds.test.push_back(a);
    }
  }
  ds.train_positives = ds.relevant(Split::kTrain);
  return ds;
}

void save_manifest(const std::filesystem::path& path, const Dataset& dataset, const nlohmann::json& meta) {
  nlohmann::json j;
  j["format"] = "boxgnn-dataset";
  j["version"] = 1;
  j["meta"] = meta;
  j["vocab_hash"] = dataset.vocab_hash();
  j["vocabulary"] = {{"users", dataset.users.ids()}, {"items", dataset.items.ids()}, {"tags", dataset.tags.ids()}};
  j["splits"] = {{"train", assignments_to_json(dataset.train)},
                 {"validation", assignments_to_json(dataset.validation)},
                 {"test", assignments_to_json(dataset.test)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, "manifest " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "boxgnn-dataset") throw FormatError(0, "manifest " + path.string() + ": not a dataset manifest");
  Dataset ds;
  try {
    for (const auto& id : j.at("vocabulary").at("users")) ds.users.intern(id.get<std::string>());
    for (const auto& id : j.at("vocabulary").at("items")) ds.items.intern(id.get<std::string>());
    for (const auto& id : j.at("vocabulary").at("tags")) ds.tags.intern(id.get<std::string>());
    const auto counts = ds.counts();
    ds.train = assignments_from_json(j.at("splits").at("train"), counts);
    ds.validation = assignments_from_json(j.at("splits").at("validation"), counts);
    ds.test = assignments_from_json(j.at("splits").at("test"), counts);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, "manifest " + path.string() + ": " + e.what());
  }
  if (j.value("vocab_hash", "") != ds.vocab_hash()) throw FormatError(0, "manifest " + path.string() + ": vocabulary hash mismatch");
  ds.train_positives = ds.relevant(Split::kTrain);
  return ds;
}

}  // namespace boxgnn
