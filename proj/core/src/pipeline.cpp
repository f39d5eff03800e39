#include "tfd/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <ostream>
#include <string_view>
#include <utility>

#include "json.hpp"
#include "tfd/checkpoint.hpp"
#include "tfd/error.hpp"
#include "tfd/eval.hpp"

namespace fs = std::filesystem;

namespace tfd::pipeline {

namespace {

using nlohmann::json;

constexpr int64_t kImageSize = 64;
constexpr int64_t kReconDumps = 8;
constexpr clf::Variant kVariantOrder[] = {clf::Variant::kP, clf::Variant::kN,
                                          clf::Variant::kPN, clf::Variant::kPNS};

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorKind::Format,
          "bad numeric field '" + std::string(s) + "' in " + context);
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  require(!f.bad(), ErrorKind::Io, "cannot read '" + path + "'");
  return bytes;
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(f.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Config parsing. Every accessor names the enclosing object so a bad value
// reports where in the file it sits; unknown keys are rejected outright.
// ---------------------------------------------------------------------------

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    require(known, ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

const json& member(const json& j, const std::string& where, const char* key) {
  const json* v = find(j, key);
  require(v != nullptr, ErrorKind::Config, where + " is missing '" + std::string(key) + "'");
  return *v;
}

uint64_t get_seed(const json& j, const std::string& where, const char* key) {
  const json& v = member(j, where, key);
  require(v.is_number_unsigned(), ErrorKind::Config,
          "'" + std::string(key) + "' in " + where + " must be a non-negative integer");
  return v.get<uint64_t>();
}

int64_t get_int(const json& j, const std::string& where, const char* key,
                int64_t fallback, int64_t min_value) {
  const json* v = find(j, key);
  if (v == nullptr) return fallback;
  require(v->is_number_integer(), ErrorKind::Config,
          "'" + std::string(key) + "' in " + where + " must be an integer");
  const int64_t value = v->get<int64_t>();
  require(value >= min_value, ErrorKind::Config,
          "'" + std::string(key) + "' in " + where + " must be >= " +
              std::to_string(min_value));
  return value;
}

double get_number(const json& j, const std::string& where, const char* key,
                  double fallback, double min_value) {
  const json* v = find(j, key);
  if (v == nullptr) return fallback;
  require(v->is_number(), ErrorKind::Config,
          "'" + std::string(key) + "' in " + where + " must be a number");
  const double value = v->get<double>();
  require(value >= min_value, ErrorKind::Config,
          "'" + std::string(key) + "' in " + where + " must be >= " +
              format_double(min_value));
  return value;
}

// ---------------------------------------------------------------------------
// Run-directory layout.
// ---------------------------------------------------------------------------

fs::path out_path(const RunConfig& cfg, const std::string& rel) {
  return fs::path(cfg.out_dir) / rel;
}

std::string config_copy_path(const RunConfig& cfg) {
  return out_path(cfg, "config.json").string();
}

std::string cache_index_path(const RunConfig& cfg, const std::string& name) {
  return out_path(cfg, "cache/" + name + ".json").string();
}

std::string vae_log_path(const RunConfig& cfg, const std::string& which) {
  return out_path(cfg, "logs/vae_" + which + ".csv").string();
}

std::string classifier_log_path(const RunConfig& cfg, clf::Variant variant,
                                uint64_t seed) {
  return out_path(cfg, "logs/classifier_" + std::string(clf::variant_name(variant)) +
                           "_s" + std::to_string(seed) + ".csv")
      .string();
}

void require_artifact(const std::string& path, const std::string& producer) {
  require(fs::exists(path), ErrorKind::Prereq,
          "missing '" + path + "'; run `tfd " + producer + "` first");
}

// Every stage after gen-data insists the config file it was handed is the
// one the run directory was built from, so artifacts from two different
// configurations can never mix in one directory.
void check_config_copy(const RunConfig& cfg, const std::string& config_path) {
  const std::string stored = config_copy_path(cfg);
  require(fs::exists(stored), ErrorKind::Prereq,
          "run directory '" + cfg.out_dir + "' has no config.json; run `tfd gen-data` first");
  require(slurp(stored) == slurp(config_path), ErrorKind::Config,
          "config file does not match '" + stored +
              "'; the run directory was created with different settings");
}

const std::string& validate_which(const std::string& which) {
  require(which == "positive" || which == "negative", ErrorKind::Invalid,
          "unknown model '" + which + "' (expected positive or negative)");
  return which;
}

// Disjoint shuffle streams per dataset; equal-sized datasets would otherwise
// share one permutation.
uint64_t dataset_split_seed(const RunConfig& cfg, const std::string& name) {
  if (name == "positive") return cfg.split_seed;
  if (name == "negative") return cfg.split_seed + 1;
  return cfg.split_seed + 2;
}

// ---------------------------------------------------------------------------
// Scalogram cache: one raw little-endian float32 file holding `count` rows
// of image_size^2 pixels, plus a JSON index with the labels.
// ---------------------------------------------------------------------------

const char* prefactor_name(cwt::Prefactor p) {
  return p == cwt::Prefactor::kReciprocal ? "reciprocal" : "reciprocal_sqrt";
}

void write_cache(const RunConfig& cfg, const std::string& name,
                 const std::vector<datagen::TrafficDay>& days,
                 const cwt::ScalogramRenderer& renderer) {
  const std::string f32 = cache_path(cfg, name);
  std::ofstream f(f32, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorKind::Io, "cannot open '" + f32 + "' for writing");
  json labels = json::array();
  for (const auto& day : days) {
    const cwt::Scalogram s = renderer.render(day.values);
    f.write(reinterpret_cast<const char*>(s.pixels.data()),
            static_cast<std::streamsize>(sizeof(float) * s.pixels.size()));
    labels.push_back(day.label == datagen::Label::kFaulty ? 1 : 0);
  }
  require(f.good(), ErrorKind::Io, "write failed for '" + f32 + "'");
  f.close();

  json idx;
  idx["count"] = days.size();
  idx["image_size"] = kImageSize;
  idx["prefactor"] = prefactor_name(cfg.prefactor);
  idx["source"] = "data/" + name + ".csv";
  idx["labels"] = std::move(labels);
  spit(cache_index_path(cfg, name), idx.dump(2) + "\n");
}

struct Cache {
  int64_t count = 0;
  int64_t image_size = 0;
  Tensor<float> images;     // [count, 1, S, S]
  std::vector<int> labels;  // 0 = normal, 1 = faulty
};

Cache read_cache(const RunConfig& cfg, const std::string& name) {
  const std::string f32 = cache_path(cfg, name);
  const std::string index = cache_index_path(cfg, name);
  require_artifact(f32, "render-cwt");
  require_artifact(index, "render-cwt");

  const json idx = json::parse(slurp(index), nullptr, false);
  require(!idx.is_discarded() && idx.is_object(), ErrorKind::Format,
          "'" + index + "' is not a valid cache index");
  Cache c;
  c.count = get_int(idx, "cache index", "count", -1, 1);
  c.image_size = get_int(idx, "cache index", "image_size", -1, 1);
  const json& labels = member(idx, "cache index", "labels");
  require(labels.is_array() && static_cast<int64_t>(labels.size()) == c.count,
          ErrorKind::Format, "'" + index + "' labels do not match count");
  c.labels.reserve(labels.size());
  for (const auto& l : labels) {
    require(l.is_number_integer() && (l == 0 || l == 1), ErrorKind::Format,
            "'" + index + "' labels must be 0 or 1");
    c.labels.push_back(l.get<int>());
  }

  const std::string bytes = slurp(f32);
  const size_t expected =
      sizeof(float) * static_cast<size_t>(c.count * c.image_size * c.image_size);
  require(bytes.size() == expected, ErrorKind::Format,
          "scalogram cache '" + f32 + "' is " + std::to_string(bytes.size()) +
              " bytes, expected " + std::to_string(expected));
  c.images = Tensor<float>({c.count, 1, c.image_size, c.image_size});
  std::memcpy(c.images.data(), bytes.data(), expected);
  return c;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<int64_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int64_t i : idx) out.push_back(labels[static_cast<size_t>(i)]);
  return out;
}

Tensor<float> gather_rows(const Tensor<float>& images, const std::vector<int64_t>& idx) {
  return vae::gather_images(images, idx, 0, static_cast<int64_t>(idx.size()));
}

// Per-epoch training curves, one row per split visit. The accuracy column
// stays empty for the VAEs, which have no notion of it.
void write_vae_log(const std::string& path, const std::vector<vae::VaeEpochLog>& hist) {
  std::string csv = "epoch,split,loss,accuracy\n";
  for (const auto& e : hist) {
    if (std::isfinite(e.train_loss))
      csv += std::to_string(e.epoch) + ",train," + format_double(e.train_loss) + ",\n";
    csv += std::to_string(e.epoch) + ",val," + format_double(e.val_loss) + ",\n";
  }
  spit(path, csv);
}

void write_clf_log(const std::string& path, const std::vector<clf::ClfEpochLog>& hist) {
  std::string csv = "epoch,split,loss,accuracy\n";
  for (const auto& e : hist) {
    csv += std::to_string(e.epoch) + ",train," + format_double(e.train_loss) + "," +
           format_double(e.train_accuracy) + "\n";
    csv += std::to_string(e.epoch) + ",val," + format_double(e.val_loss) + "," +
           format_double(e.val_accuracy) + "\n";
  }
  spit(path, csv);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config loading.
// ---------------------------------------------------------------------------

RunConfig load_run_config(const std::string& path) {
  const json j = json::parse(slurp(path), nullptr, false);
  require(!j.is_discarded(), ErrorKind::Config, "'" + path + "' is not valid JSON");
  require(j.is_object(), ErrorKind::Config, "'" + path + "' must hold a JSON object");
  check_keys(j, "run config",
             {"out_dir", "data", "cwt", "split_seed", "vae", "classifier"});

  RunConfig cfg;
  const json& od = member(j, "run config", "out_dir");
  require(od.is_string() && !od.get<std::string>().empty(), ErrorKind::Config,
          "'out_dir' must be a non-empty string");
  cfg.out_dir = od.get<std::string>();
  cfg.split_seed = get_seed(j, "run config", "split_seed");

  const json& d = member(j, "run config", "data");
  require(d.is_object(), ErrorKind::Config, "'data' must be an object");
  check_keys(d, "'data'",
             {"n_positive", "n_negative", "n_mixed_normal", "n_mixed_faulty",
              "fault_mix", "n_stations", "seed"});
  cfg.data.n_positive = get_int(d, "'data'", "n_positive", cfg.data.n_positive, 1);
  cfg.data.n_negative = get_int(d, "'data'", "n_negative", cfg.data.n_negative, 1);
  cfg.data.n_mixed_normal =
      get_int(d, "'data'", "n_mixed_normal", cfg.data.n_mixed_normal, 1);
  cfg.data.n_mixed_faulty =
      get_int(d, "'data'", "n_mixed_faulty", cfg.data.n_mixed_faulty, 1);
  cfg.data.n_stations =
      static_cast<int>(get_int(d, "'data'", "n_stations", cfg.data.n_stations, 1));
  cfg.data.seed = get_seed(d, "'data'", "seed");
  if (const json* mix = find(d, "fault_mix")) {
    require(mix->is_object(), ErrorKind::Config, "'fault_mix' must be an object");
    check_keys(*mix, "'fault_mix'", {"point", "block", "nonresponsive"});
    cfg.data.fault_mix.point =
        get_number(*mix, "'fault_mix'", "point", cfg.data.fault_mix.point, 0.0);
    cfg.data.fault_mix.block =
        get_number(*mix, "'fault_mix'", "block", cfg.data.fault_mix.block, 0.0);
    cfg.data.fault_mix.nonresponsive = get_number(
        *mix, "'fault_mix'", "nonresponsive", cfg.data.fault_mix.nonresponsive, 0.0);
  }

  if (const json* c = find(j, "cwt")) {
    require(c->is_object(), ErrorKind::Config, "'cwt' must be an object");
    check_keys(*c, "'cwt'", {"prefactor"});
    if (const json* p = find(*c, "prefactor")) {
      require(p->is_string(), ErrorKind::Config, "'prefactor' must be a string");
      const std::string name = p->get<std::string>();
      if (name == "reciprocal") {
        cfg.prefactor = cwt::Prefactor::kReciprocal;
      } else if (name == "reciprocal_sqrt") {
        cfg.prefactor = cwt::Prefactor::kReciprocalSqrt;
      } else {
        fail(ErrorKind::Config, "unknown prefactor '" + name +
                                    "' (expected reciprocal or reciprocal_sqrt)");
      }
    }
  }

  const json& v = member(j, "run config", "vae");
  require(v.is_object(), ErrorKind::Config, "'vae' must be an object");
  check_keys(v, "'vae'",
             {"alpha", "lr", "batch_size", "max_epochs", "patience",
              "seed_positive", "seed_negative"});
  cfg.vae_hyper.alpha = get_number(v, "'vae'", "alpha", cfg.vae_hyper.alpha, 0.0);
  cfg.vae_hyper.lr = get_number(v, "'vae'", "lr", cfg.vae_hyper.lr, 0.0);
  cfg.vae_hyper.batch_size = get_int(v, "'vae'", "batch_size", cfg.vae_hyper.batch_size, 1);
  cfg.vae_hyper.max_epochs = get_int(v, "'vae'", "max_epochs", cfg.vae_hyper.max_epochs, 1);
  cfg.vae_hyper.patience = get_int(v, "'vae'", "patience", cfg.vae_hyper.patience, 0);
  cfg.vae_seed_positive = get_seed(v, "'vae'", "seed_positive");
  cfg.vae_seed_negative = get_seed(v, "'vae'", "seed_negative");

  const json& cl = member(j, "run config", "classifier");
  require(cl.is_object(), ErrorKind::Config, "'classifier' must be an object");
  check_keys(cl, "'classifier'", {"lr", "batch_size", "max_epochs", "dropout", "seeds"});
  cfg.clf_hyper.lr = get_number(cl, "'classifier'", "lr", cfg.clf_hyper.lr, 0.0);
  cfg.clf_hyper.batch_size =
      get_int(cl, "'classifier'", "batch_size", cfg.clf_hyper.batch_size, 1);
  cfg.clf_hyper.max_epochs =
      get_int(cl, "'classifier'", "max_epochs", cfg.clf_hyper.max_epochs, 1);
  cfg.dropout_p = get_number(cl, "'classifier'", "dropout", cfg.dropout_p, 0.0);
  require(cfg.dropout_p < 1.0, ErrorKind::Config, "'dropout' must be < 1");
  const json& seeds = member(cl, "'classifier'", "seeds");
  require(seeds.is_array() && !seeds.empty(), ErrorKind::Config,
          "'seeds' in 'classifier' must be a non-empty array");
  for (const auto& s : seeds) {
    require(s.is_number_unsigned(), ErrorKind::Config,
            "'seeds' in 'classifier' must hold non-negative integers");
    const uint64_t seed = s.get<uint64_t>();
    require(std::find(cfg.clf_seeds.begin(), cfg.clf_seeds.end(), seed) ==
                cfg.clf_seeds.end(),
            ErrorKind::Config, "duplicate classifier seed " + std::to_string(seed));
    cfg.clf_seeds.push_back(seed);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Artifact paths.
// ---------------------------------------------------------------------------

std::string dataset_csv_path(const RunConfig& cfg, const std::string& name) {
  return out_path(cfg, "data/" + name + ".csv").string();
}

std::string cache_path(const RunConfig& cfg, const std::string& name) {
  return out_path(cfg, "cache/" + name + ".f32").string();
}

std::string vae_checkpoint_path(const RunConfig& cfg, const std::string& which) {
  return out_path(cfg, "checkpoints/vae_" + validate_which(which) + ".ckpt").string();
}

std::string classifier_checkpoint_path(const RunConfig& cfg, clf::Variant variant,
                                       uint64_t seed) {
  return out_path(cfg, "checkpoints/classifier_" +
                           std::string(clf::variant_name(variant)) + "_s" +
                           std::to_string(seed) + ".ckpt")
      .string();
}

std::string metrics_csv_path(const RunConfig& cfg, clf::Variant variant,
                             uint64_t seed) {
  return out_path(cfg, "eval/metrics_" + std::string(clf::variant_name(variant)) +
                           "_s" + std::to_string(seed) + ".csv")
      .string();
}

std::string roc_csv_path(const RunConfig& cfg, clf::Variant variant, uint64_t seed) {
  return out_path(cfg, "eval/roc_" + std::string(clf::variant_name(variant)) + "_s" +
                           std::to_string(seed) + ".csv")
      .string();
}

std::string report_csv_path(const RunConfig& cfg) {
  return out_path(cfg, "report.csv").string();
}

// ---------------------------------------------------------------------------
// Stages.
// ---------------------------------------------------------------------------

void gen_data(const RunConfig& cfg, const std::string& config_path,
              std::ostream* progress) {
  const std::string cfg_bytes = slurp(config_path);
  const std::string copy = config_copy_path(cfg);
  if (fs::exists(copy))
    require(slurp(copy) == cfg_bytes, ErrorKind::Config,
            "run directory '" + cfg.out_dir +
                "' was created with a different config; use a fresh directory");

  fs::create_directories(out_path(cfg, "data"));
  const datagen::Datasets ds = build_datasets(cfg.data);
  const std::pair<const char*, const std::vector<datagen::TrafficDay>*> sets[] = {
      {"positive", &ds.positive}, {"negative", &ds.negative}, {"mixed", &ds.mixed}};
  for (const auto& [name, days] : sets) {
    datagen::write_days_csv(dataset_csv_path(cfg, name), *days);
    if (progress)
      *progress << "wrote data/" << name << ".csv (" << days->size() << " days)\n";
  }
  // The config copy lands last: it marks the directory as fully initialized.
  spit(copy, cfg_bytes);
}

void render_cwt(const RunConfig& cfg, const std::string& config_path,
                std::ostream* progress) {
  check_config_copy(cfg, config_path);
  for (const char* name : {"positive", "negative", "mixed"})
    require_artifact(dataset_csv_path(cfg, name), "gen-data");

  fs::create_directories(out_path(cfg, "cache"));
  const cwt::ScalogramRenderer renderer(datagen::kSamplesPerDay, kImageSize,
                                        cfg.prefactor);
  for (const char* name : {"positive", "negative", "mixed"}) {
    const auto days = datagen::read_days_csv(dataset_csv_path(cfg, name));
    write_cache(cfg, name, days, renderer);
    if (progress)
      *progress << "rendered cache/" << name << ".f32 (" << days.size()
                << " images)\n";
  }
}

void train_vae_stage(const RunConfig& cfg, const std::string& config_path,
                     const std::string& which, std::ostream* progress) {
  validate_which(which);
  check_config_copy(cfg, config_path);
  const Cache cache = read_cache(cfg, which);

  const auto splits =
      datagen::split_indices(cache.count, dataset_split_seed(cfg, which));
  const Tensor<float> train_images = gather_rows(cache.images, splits[0]);
  const Tensor<float> val_images = gather_rows(cache.images, splits[1]);
  if (progress)
    *progress << "training vae_" << which << ": " << train_images.dim(0)
              << " train / " << val_images.dim(0) << " val images\n";

  vae::VaeConfig vc;
  vc.image_size = cache.image_size;
  vae::Vae<float> model(vc);
  const uint64_t seed =
      which == "positive" ? cfg.vae_seed_positive : cfg.vae_seed_negative;
  Rng rng(seed);
  model.init_params(rng);

  auto on_epoch = [&](const vae::VaeEpochLog& e) {
    if (!progress) return;
    *progress << "epoch " << e.epoch;
    if (std::isfinite(e.train_loss)) *progress << "  train " << e.train_loss;
    *progress << "  val " << e.val_loss << "\n";
  };
  const auto res =
      vae::train_vae(model, train_images, val_images, cfg.vae_hyper, seed, on_epoch);

  fs::create_directories(out_path(cfg, "logs"));
  fs::create_directories(out_path(cfg, "checkpoints"));
  write_vae_log(vae_log_path(cfg, which), res.history);

  ckpt::TrainMeta meta;
  meta.training = {{"alpha", cfg.vae_hyper.alpha},
                   {"lr", cfg.vae_hyper.lr},
                   {"batch_size", static_cast<double>(cfg.vae_hyper.batch_size)},
                   {"max_epochs", static_cast<double>(cfg.vae_hyper.max_epochs)},
                   {"patience", static_cast<double>(cfg.vae_hyper.patience)},
                   {"seed", static_cast<double>(seed)},
                   {"split_seed", static_cast<double>(cfg.split_seed)}};
  meta.metrics = {{"best_epoch", static_cast<double>(res.best_epoch)},
                  {"best_val_loss", res.best_val_loss},
                  {"epochs_run", static_cast<double>(res.epochs_run)}};
  const std::string path = vae_checkpoint_path(cfg, which);
  ckpt::save_vae(model, meta, path);
  if (progress)
    *progress << "saved checkpoints/vae_" << which << ".ckpt (best epoch "
              << res.best_epoch << ", val loss " << res.best_val_loss << ")\n";
}

void train_classifier_stage(const RunConfig& cfg, const std::string& config_path,
                            clf::Variant variant, std::ostream* progress) {
  check_config_copy(cfg, config_path);
  const Cache cache = read_cache(cfg, "mixed");
  require_artifact(vae_checkpoint_path(cfg, "positive"),
                   "train-vae --which positive");
  require_artifact(vae_checkpoint_path(cfg, "negative"),
                   "train-vae --which negative");

  const auto splits =
      datagen::split_indices(cache.count, dataset_split_seed(cfg, "mixed"));
  const std::vector<int> train_labels = gather_labels(cache.labels, splits[0]);
  const std::vector<int> val_labels = gather_labels(cache.labels, splits[1]);

  auto vp = ckpt::load_vae(vae_checkpoint_path(cfg, "positive"));
  auto vn = ckpt::load_vae(vae_checkpoint_path(cfg, "negative"));
  if (progress)
    *progress << "extracting features: " << splits[0].size() << " train / "
              << splits[1].size() << " val images\n";
  const auto train_bank =
      clf::extract_features(vp, vn, gather_rows(cache.images, splits[0]),
                            cfg.clf_hyper.batch_size);
  const auto val_bank =
      clf::extract_features(vp, vn, gather_rows(cache.images, splits[1]),
                            cfg.clf_hyper.batch_size);

  clf::ClassifierConfig cc;
  cc.variant = variant;
  cc.block_dims = clf::block_dims_for(vp.config());
  cc.dropout_p = cfg.dropout_p;

  fs::create_directories(out_path(cfg, "logs"));
  fs::create_directories(out_path(cfg, "checkpoints"));
  for (const uint64_t seed : cfg.clf_seeds) {
    if (progress)
      *progress << "training classifier " << clf::variant_name(variant) << " (seed "
                << seed << ")\n";
    clf::Classifier<float> model(cc);
    Rng rng(seed);
    model.init_params(rng);
    auto on_epoch = [&](const clf::ClfEpochLog& e) {
      if (!progress) return;
      *progress << "epoch " << e.epoch << "  train " << e.train_loss << " / "
                << e.train_accuracy << "  val " << e.val_loss << " / "
                << e.val_accuracy << "\n";
    };
    const auto res = clf::train_classifier(model, train_bank, train_labels, val_bank,
                                           val_labels, cfg.clf_hyper, seed, on_epoch);
    write_clf_log(classifier_log_path(cfg, variant, seed), res.history);

    ckpt::TrainMeta meta;
    meta.training = {{"lr", cfg.clf_hyper.lr},
                     {"batch_size", static_cast<double>(cfg.clf_hyper.batch_size)},
                     {"max_epochs", static_cast<double>(cfg.clf_hyper.max_epochs)},
                     {"dropout", cfg.dropout_p},
                     {"seed", static_cast<double>(seed)},
                     {"split_seed", static_cast<double>(cfg.split_seed)}};
    meta.metrics = {{"best_epoch", static_cast<double>(res.best_epoch)},
                    {"best_val_accuracy", res.best_val_accuracy},
                    {"epochs_run", static_cast<double>(res.epochs_run)}};
    ckpt::save_classifier(model, meta, classifier_checkpoint_path(cfg, variant, seed));
    if (progress)
      *progress << "saved checkpoints/classifier_" << clf::variant_name(variant)
                << "_s" << seed << ".ckpt (best epoch " << res.best_epoch
                << ", val accuracy " << res.best_val_accuracy << ")\n";
  }
}

void evaluate_stage(const RunConfig& cfg, const std::string& config_path,
                    bool dump_reconstructions, std::ostream* progress) {
  check_config_copy(cfg, config_path);
  const Cache cache = read_cache(cfg, "mixed");
  require_artifact(vae_checkpoint_path(cfg, "positive"),
                   "train-vae --which positive");
  require_artifact(vae_checkpoint_path(cfg, "negative"),
                   "train-vae --which negative");

  std::vector<std::pair<clf::Variant, uint64_t>> present;
  for (const clf::Variant variant : kVariantOrder)
    for (const uint64_t seed : cfg.clf_seeds)
      if (fs::exists(classifier_checkpoint_path(cfg, variant, seed)))
        present.emplace_back(variant, seed);
  require(!present.empty(), ErrorKind::Prereq,
          "no classifier checkpoints found under '" +
              out_path(cfg, "checkpoints").string() +
              "'; run `tfd train-classifier` first");

  const auto splits =
      datagen::split_indices(cache.count, dataset_split_seed(cfg, "mixed"));
  const std::vector<int64_t>& test_idx = splits[2];
  const std::vector<int> test_labels = gather_labels(cache.labels, test_idx);
  const Tensor<float> test_images = gather_rows(cache.images, test_idx);

  auto vp = ckpt::load_vae(vae_checkpoint_path(cfg, "positive"));
  auto vn = ckpt::load_vae(vae_checkpoint_path(cfg, "negative"));
  if (progress) *progress << "extracting features: " << test_idx.size() << " test images\n";
  const auto test_bank =
      clf::extract_features(vp, vn, test_images, cfg.clf_hyper.batch_size);

  fs::create_directories(out_path(cfg, "eval"));
  for (const auto& [variant, seed] : present) {
    auto model = ckpt::load_classifier(classifier_checkpoint_path(cfg, variant, seed));
    const std::vector<double> scores =
        clf::faulty_scores(model, test_bank, cfg.clf_hyper.batch_size);
    const eval::ConfusionCounts counts = eval::confusion(scores, test_labels);
    const eval::MetricsResult m = eval::metrics(counts);
    const eval::RocCurve roc = eval::roc_auc(scores, test_labels);
    eval::write_metrics_csv(metrics_csv_path(cfg, variant, seed),
                            clf::variant_name(variant), m, roc.auc);
    eval::write_roc_csv(roc_csv_path(cfg, variant, seed), roc);
    if (progress)
      *progress << clf::variant_name(variant) << " seed " << seed << ": accuracy "
                << m.accuracy << ", auc " << roc.auc << "\n";
  }

  if (!dump_reconstructions) return;
  // A handful of test images next to both models' reconstructions, as a
  // quick visual check that the positive model prefers normal days.
  fs::create_directories(out_path(cfg, "eval/recon"));
  const int64_t n_dump = std::min<int64_t>(kReconDumps, test_images.dim(0));
  const int64_t s = cache.image_size;
  for (int64_t i = 0; i < n_dump; ++i) {
    const Tensor<float> x = gather_rows(test_images, {i});
    Tensor<float> img({s, s});
    std::memcpy(img.data(), x.data(), sizeof(float) * static_cast<size_t>(s * s));
    const std::string base =
        out_path(cfg, "eval/recon/test" + std::to_string(i)).string();
    cwt::write_pgm(base + "_input.pgm", img);
    const std::pair<const char*, vae::Vae<float>*> models[] = {{"positive", &vp},
                                                               {"negative", &vn}};
    for (const auto& [name, model] : models) {
      const auto enc = model->encode(x, vae::Mode::kEval);
      const Tensor<float> xhat = model->decode(enc.mu, vae::Mode::kEval);
      std::memcpy(img.data(), xhat.data(), sizeof(float) * static_cast<size_t>(s * s));
      cwt::write_pgm(base + "_vae_" + name + ".pgm", img);
    }
  }
  if (progress)
    *progress << "dumped " << n_dump << " reconstruction pairs under eval/recon\n";
}

void report_stage(const RunConfig& cfg, const std::string& config_path,
                  std::ostream* progress) {
  check_config_copy(cfg, config_path);

  std::string csv = "variant,seed,precision,recall,f1_score,accuracy,auc\n";
  int64_t n_rows = 0;
  for (const clf::Variant variant : kVariantOrder) {
    double sums[5] = {0, 0, 0, 0, 0};
    int64_t n_seeds = 0;
    for (const uint64_t seed : cfg.clf_seeds) {
      const std::string path = metrics_csv_path(cfg, variant, seed);
      if (!fs::exists(path)) continue;
      const std::string text = slurp(path);
      const size_t nl1 = text.find('\n');
      require(nl1 != std::string::npos && text.find('\n', nl1 + 1) != std::string::npos,
              ErrorKind::Format, "'" + path + "' is not a metrics CSV");
      const std::string header = text.substr(0, nl1);
      require(header == "variant,precision,recall,f1_score,accuracy,auc",
              ErrorKind::Format, "'" + path + "' has an unexpected header");
      const size_t nl2 = text.find('\n', nl1 + 1);
      const auto fields = split_csv_line(text.substr(nl1 + 1, nl2 - nl1 - 1));
      require(fields.size() == 6 && fields[0] == clf::variant_name(variant),
              ErrorKind::Format, "'" + path + "' row does not match its filename");
      csv += fields[0] + "," + std::to_string(seed);
      for (size_t k = 0; k < 5; ++k) {
        const double value = parse_double(fields[k + 1], "'" + path + "'");
        sums[k] += value;
        csv += "," + fields[k + 1];
      }
      csv += "\n";
      ++n_seeds;
      ++n_rows;
    }
    if (n_seeds == 0) continue;
    csv += std::string(clf::variant_name(variant)) + ",mean";
    for (double sum : sums)
      csv += "," + format_double(sum / static_cast<double>(n_seeds));
    csv += "\n";
  }
  require(n_rows > 0, ErrorKind::Prereq,
          "no metrics found under '" + out_path(cfg, "eval").string() +
              "'; run `tfd evaluate` first");
  spit(report_csv_path(cfg), csv);
  if (progress)
    *progress << "wrote report.csv (" << n_rows << " classifier rows)\n";
}

}  // namespace tfd::pipeline
