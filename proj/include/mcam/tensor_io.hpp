#pragma once

// MCAMTENS blobs: "MCAMTENS", u32 LE rank, rank x u64 LE dims, f32 LE payload.
// A checkpoint is a directory with manifest.json plus one blob per tensor.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcam/tensor.hpp"

namespace mcam {

namespace fs = std::filesystem;

std::vector<uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<uint8_t>& bytes);
void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);
void write_json_file(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const fs::path& path);

inline constexpr const char* kCheckpointFormat = "mcam-checkpoint/1";

struct Checkpoint {
    std::string stage;  // BASE_VG, CAM_OPERATOR(<motion>), ADA_CONTROL
    uint64_t seed = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<double> loss_history;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir);
Checkpoint load_checkpoint(const fs::path& dir);
bool checkpoint_exists(const fs::path& dir);

}  // namespace mcam
