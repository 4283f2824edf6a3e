#pragma once

// Binary checkpoint container, little-endian throughout:
//
//   "HARTCKPT"                      8 bytes magic
//   u32 format version              currently 1
//   u64 n, n bytes                  header text: "key=value\n" lines, sorted;
//                                   model.* = ModelConfig, meta.* = metadata
//   u64 n, n bytes                  vocabulary, one token per line
//   u32 count                       named tensors, then per tensor:
//     u32 n, n bytes                name
//     u8  dtype                     1 = float64
//     u8  flags                     bit 0 = trainable
//     u32 rank, rank x u64          shape
//     numel x f64                   payload
//
// Tensor groups are distinguished by name prefix: model parameters as named
// by the model, "head." for task heads, "opt.m." / "opt.v." for optimizer
// moments (the optimizer step lives in meta.opt_step).

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "hart/corpus/vocabulary.hpp"
#include "hart/model/params.hpp"
#include "hart/train/optimizer.hpp"

namespace hart::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    model::Model model;
    corpus::Vocabulary vocab;
    num::ParameterSet head;
    std::optional<OptimizerState> optimizer;
    std::map<std::string, std::string> meta;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hart::train
