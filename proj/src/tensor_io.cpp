#include "mcam/tensor_io.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mcam/errors.hpp"

namespace mcam {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'A', 'M', 'T', 'E', 'N', 'S'};

template <typename U>
void put_le(std::vector<uint8_t>& out, U v) {
    for (size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::vector<uint8_t>& in, size_t& at) {
    if (at + sizeof(U) > in.size()) throw FormatError("tensor blob truncated");
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[at + i]) << (8 * i);
    at += sizeof(U);
    return v;
}

std::vector<uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string blob_name(const std::string& tensor_name) {
    std::string out;
    for (char c : tensor_name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-') ? c : '_';
    return out + ".bin";
}

}  // namespace

std::vector<uint8_t> encode_tensor(const Tensor& t) {
    std::vector<uint8_t> out(kMagic, kMagic + 8);
    put_le<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) put_le<uint64_t>(out, static_cast<uint64_t>(d));
    out.reserve(out.size() + 4 * static_cast<size_t>(t.numel()));
    for (float v : t.storage()) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le<uint32_t>(out, bits);
    }
    return out;
}

Tensor decode_tensor(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("bad tensor magic");
    size_t at = 8;
    const uint32_t rank = get_le<uint32_t>(bytes, at);
    Shape shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int64_t>(get_le<uint64_t>(bytes, at)));
    const int64_t n = shape_numel(shape);
    if (bytes.size() - at != static_cast<size_t>(n) * 4) throw FormatError("tensor payload size mismatch");
    std::vector<float> data(static_cast<size_t>(n));
    for (auto& v : data) {
        const uint32_t bits = get_le<uint32_t>(bytes, at);
        std::memcpy(&v, &bits, 4);
    }
    return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const fs::path& path, const Tensor& t) {
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_bytes(path)); }

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return {bytes.begin(), bytes.end()};
}

void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

nlohmann::json read_json_file(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
    fs::create_directories(dir / "tensors");
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : ckpt.tensors) {
        const std::string file = "tensors/" + blob_name(name);
        write_tensor(dir / file, t);
        tensors.push_back({{"name", name}, {"file", file}, {"shape", t.shape()}, {"dtype", "f32"}});
    }
    nlohmann::json manifest = {{"format", kCheckpointFormat},
                               {"stage", ckpt.stage},
                               {"seed", ckpt.seed},
                               {"meta", ckpt.meta},
                               {"loss_history", ckpt.loss_history},
                               {"tensors", tensors}};
    write_json_file(dir / "manifest.json", manifest);
}

bool checkpoint_exists(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!checkpoint_exists(dir)) throw IoError("no checkpoint manifest in " + dir.string());
    const auto manifest = read_json_file(dir / "manifest.json");
    if (manifest.value("format", "") != kCheckpointFormat)
        throw CompatibilityError("checkpoint format '" + manifest.value("format", "") + "' is not " + kCheckpointFormat);
    Checkpoint ckpt;
    ckpt.stage = manifest.at("stage").get<std::string>();
    ckpt.seed = manifest.at("seed").get<uint64_t>();
    ckpt.meta = manifest.at("meta");
    ckpt.loss_history = manifest.at("loss_history").get<std::vector<double>>();
    for (const auto& entry : manifest.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        const fs::path file = dir / entry.at("file").get<std::string>();
        if (!fs::exists(file)) throw IntegrityError("checkpoint tensor '" + name + "' missing: " + file.string());
        Tensor t = read_tensor(file);
        if (t.shape() != entry.at("shape").get<Shape>())
            throw IntegrityError("checkpoint tensor '" + name + "' shape disagrees with manifest");
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

}  // namespace mcam
