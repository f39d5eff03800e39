#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tfd/classifier.hpp"
#include "tfd/vae.hpp"

// Model persistence. A checkpoint file is a four-byte magic, a 32-bit
// little-endian header length, a JSON header, and a payload of raw
// little-endian float32 arrays concatenated in the order the header
// declares them. The header carries the format version, the model kind,
// the architecture needed to rebuild the model, and two free-form numeric
// maps (training settings and result metrics) that travel with the file
// for audit purposes. Round-trips are bit-exact.

namespace tfd::ckpt {

inline constexpr uint32_t kFormatVersion = 1;

// Numeric facts recorded alongside the weights. Values are stored as JSON
// numbers, so integers above 2^53 would lose precision; nothing recorded
// here (epochs, losses, seeds chosen by configs) gets near that.
struct TrainMeta {
  std::map<std::string, double> training;
  std::map<std::string, double> metrics;
};

void save_vae(vae::Vae<float>& model, const TrainMeta& meta,
              const std::string& path);
vae::Vae<float> load_vae(const std::string& path, TrainMeta* meta = nullptr);

void save_classifier(clf::Classifier<float>& model, const TrainMeta& meta,
                     const std::string& path);
clf::Classifier<float> load_classifier(const std::string& path,
                                       TrainMeta* meta = nullptr);

// FNV-1a over the file bytes; the freeze audit compares checkpoint hashes
// before and after downstream training.
uint64_t file_fnv1a(const std::string& path);

}  // namespace tfd::ckpt
