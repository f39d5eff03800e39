#include "tfd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tfd/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are raw little-endian float32");

namespace tfd::ckpt {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'F', 'D', 'C'};

using ArrayRefs = std::vector<std::pair<std::string, const Tensor<float>*>>;

json meta_to_json(const std::map<std::string, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, double> meta_from_json(const json& j,
                                             const std::string& which) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) {
    require(v.is_number(), ErrorKind::Format,
            "checkpoint header: non-numeric " + which + " entry '" + k + "'");
    m[k] = v.get<double>();
  }
  return m;
}

void write_file(const std::string& path, const std::string& kind,
                json architecture, const TrainMeta& meta,
                const ArrayRefs& arrays) {
  json header{{"format_version", kFormatVersion},
              {"model_kind", kind},
              {"architecture", std::move(architecture)},
              {"training", meta_to_json(meta.training)},
              {"metrics", meta_to_json(meta.metrics)}};
  json decl = json::array();
  for (const auto& [name, t] : arrays)
    decl.push_back({{"name", name}, {"shape", t->shape()}});
  header["arrays"] = std::move(decl);
  const std::string htext = header.dump();

  // Write beside the target and rename, so a crash never leaves a partial
  // file under the checkpoint's name.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::Io, "cannot write checkpoint '" + tmp + "'");
    out.write(kMagic, 4);
    const auto hlen = static_cast<uint32_t>(htext.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& [name, t] : arrays)
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->size()) * 4);
    require(out.good(), ErrorKind::Io, "write failed for checkpoint '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::Io,
          "cannot move checkpoint into place at '" + path + "': " + ec.message());
}

struct RawCheckpoint {
  std::string kind;
  json architecture;
  TrainMeta meta;
  std::map<std::string, Tensor<float>> arrays;
};

const json& field(const json& h, const char* name) {
  auto it = h.find(name);
  require(it != h.end(), ErrorKind::Format,
          std::string("checkpoint header missing '") + name + "'");
  return *it;
}

RawCheckpoint read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open checkpoint '" + path + "'");
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  require(!ec, ErrorKind::Io, "cannot stat checkpoint '" + path + "'");

  char magic[4];
  uint32_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&hlen), 4);
  require(in.good() && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::Format,
          "'" + path + "' is not a checkpoint file (bad magic)");
  require(file_size >= 8 + static_cast<uint64_t>(hlen), ErrorKind::Format,
          "checkpoint header truncated in '" + path + "'");

  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  const json header = json::parse(htext, nullptr, /*allow_exceptions=*/false);
  require(!header.is_discarded(), ErrorKind::Format,
          "checkpoint header in '" + path + "' is not valid JSON");

  const auto version = field(header, "format_version").get<uint32_t>();
  require(version == kFormatVersion, ErrorKind::Format,
          "checkpoint '" + path + "' has format version " +
              std::to_string(version) + "; this build reads version " +
              std::to_string(kFormatVersion));

  RawCheckpoint raw;
  raw.kind = field(header, "model_kind").get<std::string>();
  raw.architecture = field(header, "architecture");
  raw.meta.training = meta_from_json(field(header, "training"), "training");
  raw.meta.metrics = meta_from_json(field(header, "metrics"), "metrics");

  uint64_t payload_bytes = 0;
  std::vector<std::pair<std::string, std::vector<int64_t>>> decls;
  for (const auto& a : field(header, "arrays")) {
    auto name = field(a, "name").get<std::string>();
    auto shape = field(a, "shape").get<std::vector<int64_t>>();
    uint64_t count = 1;
    for (int64_t d : shape) {
      require(d > 0, ErrorKind::Format,
              "checkpoint array '" + name + "' declares a non-positive dimension");
      count *= static_cast<uint64_t>(d);
    }
    payload_bytes += count * 4;
    decls.emplace_back(std::move(name), std::move(shape));
  }
  const uint64_t have = file_size - 8 - hlen;
  require(have >= payload_bytes, ErrorKind::Format,
          "checkpoint payload truncated in '" + path + "': header declares " +
              std::to_string(payload_bytes) + " bytes, file carries " +
              std::to_string(have));
  require(have == payload_bytes, ErrorKind::Format,
          "checkpoint payload size mismatch in '" + path + "': header declares " +
              std::to_string(payload_bytes) + " bytes, file carries " +
              std::to_string(have));

  for (auto& [name, shape] : decls) {
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size()) * 4);
    require(in.good(), ErrorKind::Io, "read failed for checkpoint '" + path + "'");
    raw.arrays.emplace(std::move(name), std::move(t));
  }
  return raw;
}

void require_kind(const RawCheckpoint& raw, const std::string& expected,
                  const std::string& path) {
  require(raw.kind == "vae" || raw.kind == "classifier", ErrorKind::Format,
          "checkpoint '" + path + "' has unknown model kind '" + raw.kind + "'");
  require(raw.kind == expected, ErrorKind::Format,
          "checkpoint '" + path + "' holds a '" + raw.kind + "' model, expected '" +
              expected + "'");
}

}  // namespace

void save_vae(vae::Vae<float>& model, const TrainMeta& meta,
              const std::string& path) {
  const vae::VaeConfig& cfg = model.config();
  json arch{{"image_size", cfg.image_size},
            {"widths", cfg.widths},
            {"latent_dim", cfg.latent_dim}};
  ArrayRefs arrays;
  auto grab = [&](const std::string& n, Tensor<float>& t) {
    arrays.emplace_back(n, &t);
  };
  model.for_each_param(grab);
  model.for_each_state(grab);
  write_file(path, "vae", std::move(arch), meta, arrays);
}

vae::Vae<float> load_vae(const std::string& path, TrainMeta* meta) {
  RawCheckpoint raw = read_file(path);
  require_kind(raw, "vae", path);
  vae::VaeConfig cfg;
  cfg.image_size = field(raw.architecture, "image_size").get<int64_t>();
  cfg.widths = field(raw.architecture, "widths").get<std::vector<int64_t>>();
  cfg.latent_dim = field(raw.architecture, "latent_dim").get<int64_t>();
  vae::Vae<float> model(cfg);
  model.load_state_dict(raw.arrays);
  if (meta) *meta = std::move(raw.meta);
  return model;
}

void save_classifier(clf::Classifier<float>& model, const TrainMeta& meta,
                     const std::string& path) {
  const clf::ClassifierConfig& cfg = model.config();
  json arch{{"variant", clf::variant_name(cfg.variant)},
            {"block_dims", cfg.block_dims},
            {"proj_dim", cfg.proj_dim},
            {"hidden_dim", cfg.hidden_dim},
            {"dropout_p", cfg.dropout_p}};
  ArrayRefs arrays;
  model.for_each_param(
      [&](const std::string& n, Tensor<float>& t) { arrays.emplace_back(n, &t); });
  write_file(path, "classifier", std::move(arch), meta, arrays);
}

clf::Classifier<float> load_classifier(const std::string& path, TrainMeta* meta) {
  RawCheckpoint raw = read_file(path);
  require_kind(raw, "classifier", path);
  clf::ClassifierConfig cfg;
  cfg.variant =
      clf::variant_from_name(field(raw.architecture, "variant").get<std::string>());
  cfg.block_dims =
      field(raw.architecture, "block_dims").get<std::vector<int64_t>>();
  cfg.proj_dim = field(raw.architecture, "proj_dim").get<int64_t>();
  cfg.hidden_dim = field(raw.architecture, "hidden_dim").get<int64_t>();
  cfg.dropout_p = field(raw.architecture, "dropout_p").get<double>();
  clf::Classifier<float> model(cfg);
  model.load_state_dict(raw.arrays);
  if (meta) *meta = std::move(raw.meta);
  return model;
}

uint64_t file_fnv1a(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "' for hashing");
  uint64_t hash = 14695981039346656037ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ULL;
    }
  }
  return hash;
}

}  // namespace tfd::ckpt
