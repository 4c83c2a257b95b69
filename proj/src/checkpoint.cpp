#include "boxgnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "boxgnn/training.hpp"

namespace boxgnn {

namespace {

constexpr char kMagic[8] = {'B', 'O', 'X', 'G', 'N', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("checkpoint: truncated file");
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) value |= static_cast<T>(in[pos + b]) << (8 * b);
  pos += sizeof(T);
  return value;
}

struct TableRef {
  std::string name;
  Eigen::Index rows, cols;
};

std::vector<std::string> table_names(std::size_t layers) {
  std::vector<std::string> names{"user_center", "user_offset", "item_center", "item_offset", "tag_center", "tag_offset"};
  for (std::size_t l = 0; l < layers; ++l) names.push_back("attention" + std::to_string(l) + "_weight");
  for (std::size_t l = 0; l < layers; ++l) names.push_back("attention" + std::to_string(l) + "_bias");
  return names;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const ModelParams& p = ckpt.params;
  const auto counts = p.counts();
  nlohmann::json header;
  header["format"] = "boxgnn-checkpoint";
  header["endianness"] = "little";
  header["scalar"] = "float64";
  header["config"] = ckpt.config;
  header["vocab_hash"] = ckpt.vocab_hash;
  header["seed"] = ckpt.seed;
  header["epoch"] = ckpt.epoch;
  header["counts"] = {{"users", counts.users}, {"items", counts.items}, {"tags", counts.tags}};
  header["dim"] = p.dim();
  header["layers"] = p.layers();
  header["optimizer"] = {{"name", "adam"},
                         {"beta1", AdamOptimizer::kBeta1},
                         {"beta2", AdamOptimizer::kBeta2},
                         {"epsilon", AdamOptimizer::kEpsilon}};

  std::vector<const double*> data;
  std::vector<std::size_t> sizes;
  nlohmann::json tables = nlohmann::json::array();
  const auto names = table_names(p.layers());
  std::size_t name_idx = 0;
  for (const RowMatrix* t : p.tables()) {
    tables.push_back({{"name", names[name_idx++]}, {"rows", t->rows()}, {"cols", t->cols()}});
    data.push_back(t->data());
    sizes.push_back(static_cast<std::size_t>(t->size()));
  }
  for (const Vector* v : p.vectors()) {
    tables.push_back({{"name", names[name_idx++]}, {"rows", v->size()}, {"cols", 1}});
    data.push_back(v->data());
    sizes.push_back(static_cast<std::size_t>(v->size()));
  }
  header["tables"] = tables;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (std::size_t k = 0; k < data.size(); ++k) {
    for (std::size_t n = 0; n < sizes[k]; ++n) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(data[k][n]));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
  const nlohmann::json header =
      nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                            bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  pos += header_len;
  if (header.value("format", "") != "boxgnn-checkpoint" || header.value("endianness", "") != "little") {
    throw std::runtime_error("checkpoint: unrecognised header");
  }

  Checkpoint ckpt;
  ckpt.config = header.at("config");
  ckpt.vocab_hash = header.at("vocab_hash").get<std::string>();
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.epoch = header.at("epoch").get<std::uint64_t>();
  const NodeCounts counts{header.at("counts").at("users").get<std::size_t>(),
                          header.at("counts").at("items").get<std::size_t>(),
                          header.at("counts").at("tags").get<std::size_t>()};
  ckpt.params = ModelParams::zeros(counts, header.at("dim").get<Eigen::Index>(), header.at("layers").get<std::size_t>());

  const auto& tables = header.at("tables");
  auto targets = ckpt.params.tables();
  auto vectors = ckpt.params.vectors();
  if (tables.size() != targets.size() + vectors.size()) throw std::runtime_error("checkpoint: table count mismatch");
  auto read_into = [&](double* dst, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) dst[k] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  };
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const auto rows = tables[k].at("rows").get<Eigen::Index>();
    const auto cols = tables[k].at("cols").get<Eigen::Index>();
    if (k < targets.size()) {
      if (rows != targets[k]->rows() || cols != targets[k]->cols()) throw std::runtime_error("checkpoint: shape mismatch");
      read_into(targets[k]->data(), static_cast<std::size_t>(rows * cols));
    } else {
      Vector* v = vectors[k - targets.size()];
      if (rows != v->size() || cols != 1) throw std::runtime_error("checkpoint: shape mismatch");
      read_into(v->data(), static_cast<std::size_t>(rows));
    }
  }
  if (pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace boxgnn
