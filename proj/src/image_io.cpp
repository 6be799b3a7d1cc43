#include "mcam/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "mcam/errors.hpp"

namespace mcam {

uint8_t quantize_u8(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::min(255.0f, std::floor(c * 255.0f + 0.5f)));
}

std::vector<uint8_t> encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("PPM image must be [H, W, 3]");
    const std::string header = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<size_t>(image.numel()));
    for (float v : image.storage()) out.push_back(quantize_u8(v));
    return out;
}

Tensor decode_ppm(const std::vector<uint8_t>& bytes) {
    size_t at = 0;
    auto next_token = [&]() {
        while (at < bytes.size()) {
            if (bytes[at] == '#') {
                while (at < bytes.size() && bytes[at] != '\n') ++at;
            } else if (std::isspace(bytes[at])) {
                ++at;
            } else {
                break;
            }
        }
        std::string tok;
        while (at < bytes.size() && !std::isspace(bytes[at])) tok += static_cast<char>(bytes[at++]);
        return tok;
    };
    if (next_token() != "P6") throw FormatError("not a binary PPM (P6)");
    int64_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoll(next_token());
        h = std::stoll(next_token());
        maxval = std::stoll(next_token());
    } catch (const std::logic_error&) {
        throw FormatError("malformed PPM header");
    }
    if (maxval != 255 || w < 1 || h < 1) throw FormatError("unsupported PPM header");
    ++at;  // single whitespace before the raster
    const size_t n = static_cast<size_t>(w * h * 3);
    if (bytes.size() < at + n) throw FormatError("PPM raster truncated");
    Tensor image(Shape{h, w, 3});
    for (size_t i = 0; i < n; ++i) image[static_cast<int64_t>(i)] = static_cast<float>(bytes[at + i]) / 255.0f;
    return image;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
    const auto bytes = encode_ppm(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return decode_ppm({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace mcam
