#include "jscc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "jscc/rng.hpp"

namespace jscc {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

void paint_gradient(std::vector<double>& px, const ImageDims& d, Rng& rng) {
    const double theta = rng.uniform(0.0, kTau);
    const double dx = std::cos(theta), dy = std::sin(theta);
    for (std::size_t ch = 0; ch < d.c; ++ch) {
        const double lo = rng.uniform(0.05, 0.95);
        const double hi = rng.uniform(0.05, 0.95);
        for (std::size_t y = 0; y < d.h; ++y) {
            for (std::size_t x = 0; x < d.w; ++x) {
                const double u = (static_cast<double>(x) / (d.w - 1) - 0.5) * dx +
                                 (static_cast<double>(y) / (d.h - 1) - 0.5) * dy;
                const double t = std::clamp(u + 0.5, 0.0, 1.0);
                px[(ch * d.h + y) * d.w + x] = lo + (hi - lo) * t;
            }
        }
    }
}

void paint_checkerboard(std::vector<double>& px, const ImageDims& d, Rng& rng) {
    const std::size_t period = 2 << rng.below(3);  // 2, 4 or 8
    const std::size_t ox = rng.below(period);
    const std::size_t oy = rng.below(period);
    for (std::size_t ch = 0; ch < d.c; ++ch) {
        const double a = rng.uniform(0.05, 0.95);
        const double b = rng.uniform(0.05, 0.95);
        for (std::size_t y = 0; y < d.h; ++y) {
            for (std::size_t x = 0; x < d.w; ++x) {
                const bool on = (((x + ox) / period) + ((y + oy) / period)) % 2 == 0;
                px[(ch * d.h + y) * d.w + x] = on ? a : b;
            }
        }
    }
}

void paint_texture(std::vector<double>& px, const ImageDims& d, Rng& rng) {
    // Few low-frequency plane waves shared across channels, mixed with
    // per-channel amplitudes and phases.
    constexpr int kWaves = 4;
    double fx[kWaves], fy[kWaves];
    for (int k = 0; k < kWaves; ++k) {
        fx[k] = static_cast<double>(1 + rng.below(3));
        fy[k] = static_cast<double>(1 + rng.below(3));
    }
    for (std::size_t ch = 0; ch < d.c; ++ch) {
        double amp[kWaves], phase[kWaves];
        for (int k = 0; k < kWaves; ++k) {
            amp[k] = rng.uniform(0.3, 1.0);
            phase[k] = rng.uniform(0.0, kTau);
        }
        double lo = 1e300, hi = -1e300;
        std::vector<double> tmp(d.h * d.w);
        for (std::size_t y = 0; y < d.h; ++y) {
            for (std::size_t x = 0; x < d.w; ++x) {
                double v = 0.0;
                for (int k = 0; k < kWaves; ++k) {
                    v += amp[k] * std::cos(kTau * (fx[k] * x / d.w + fy[k] * y / d.h) + phase[k]);
                }
                tmp[y * d.w + x] = v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        const double span = (hi > lo) ? hi - lo : 1.0;
        for (std::size_t i = 0; i < tmp.size(); ++i) {
            px[ch * d.h * d.w + i] = 0.02 + 0.96 * (tmp[i] - lo) / span;
        }
    }
}

}  // namespace

ProceduralSource::ProceduralSource(ImageDims dims, std::uint64_t seed)
    : DataSource(dims), seed_(seed) {
    if (dims.c == 0 || dims.h < 2 || dims.w < 2) {
        throw ConfigError("procedural source needs c >= 1 and h, w >= 2");
    }
}

std::vector<double> ProceduralSource::image(std::uint64_t index) const {
    Rng rng(derive_seed(seed_, "proc.image", index));
    std::vector<double> px(dims_.numel());
    switch (rng.below(3)) {
        case 0: paint_gradient(px, dims_, rng); break;
        case 1: paint_checkerboard(px, dims_, rng); break;
        default: paint_texture(px, dims_, rng); break;
    }
    return px;
}

// ---------------------------------------------------------------------------
// PNM ingestion
// ---------------------------------------------------------------------------

namespace {

int read_pnm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments; returns a nonnegative integer.
    while (true) {
        int ch = in.peek();
        if (ch == EOF) throw IoError("truncated PNM header in '" + path + "'");
        if (std::isspace(ch)) {
            in.get();
            continue;
        }
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    long long value = 0;
    if (!(in >> value) || value < 0) {
        throw IoError("malformed PNM header in '" + path + "'");
    }
    return static_cast<int>(value);
}

}  // namespace

RawImage load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image '" + path + "'");
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6')) {
        throw IoError("unsupported raster format in '" + path + "' (need PGM/PPM)");
    }
    const bool color = (kind == '3' || kind == '6');
    const bool binary = (kind == '5' || kind == '6');

    const int w = read_pnm_token(in, path);
    const int h = read_pnm_token(in, path);
    const int maxval = read_pnm_token(in, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
        throw IoError("invalid PNM dimensions in '" + path + "'");
    }

    RawImage img;
    img.c = color ? 3 : 1;
    img.h = static_cast<std::size_t>(h);
    img.w = static_cast<std::size_t>(w);
    const std::size_t samples = img.c * img.h * img.w;
    std::vector<double> interleaved(samples);

    if (binary) {
        in.get();  // single whitespace after maxval
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(samples * bytes);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
            throw IoError("truncated pixel data in '" + path + "'");
        }
        for (std::size_t i = 0; i < samples; ++i) {
            const int v = bytes == 1 ? buf[i] : (buf[2 * i] << 8) | buf[2 * i + 1];
            interleaved[i] = static_cast<double>(v) / maxval;
        }
    } else {
        for (std::size_t i = 0; i < samples; ++i) {
            long long v;
            if (!(in >> v) || v < 0 || v > maxval) {
                throw IoError("malformed pixel data in '" + path + "'");
            }
            interleaved[i] = static_cast<double>(v) / maxval;
        }
    }

    // interleaved RGB -> channel-major
    img.pixels.resize(samples);
    for (std::size_t y = 0; y < img.h; ++y) {
        for (std::size_t x = 0; x < img.w; ++x) {
            for (std::size_t ch = 0; ch < img.c; ++ch) {
                img.pixels[(ch * img.h + y) * img.w + x] =
                    interleaved[(y * img.w + x) * img.c + ch];
            }
        }
    }
    return img;
}

std::vector<double> fit_to_dims(const RawImage& raw, const ImageDims& dims,
                                const std::string& path) {
    if (raw.h < dims.h || raw.w < dims.w) {
        throw IoError("image '" + path + "' is " + std::to_string(raw.w) + "x" +
                      std::to_string(raw.h) + ", smaller than the configured " +
                      std::to_string(dims.w) + "x" + std::to_string(dims.h));
    }
    if (raw.c != dims.c && raw.c != 1) {
        throw IoError("image '" + path + "' has " + std::to_string(raw.c) +
                      " channels, configuration needs " + std::to_string(dims.c));
    }
    const std::size_t y0 = (raw.h - dims.h) / 2;
    const std::size_t x0 = (raw.w - dims.w) / 2;
    std::vector<double> out(dims.numel());
    for (std::size_t ch = 0; ch < dims.c; ++ch) {
        const std::size_t src_ch = raw.c == 1 ? 0 : ch;
        for (std::size_t y = 0; y < dims.h; ++y) {
            for (std::size_t x = 0; x < dims.w; ++x) {
                out[(ch * dims.h + y) * dims.w + x] =
                    raw.pixels[(src_ch * raw.h + y0 + y) * raw.w + x0 + x];
            }
        }
    }
    return out;
}

DirectorySource::DirectorySource(const std::string& path, ImageDims dims) : DataSource(dims) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) {
        throw IoError("dataset directory '" + path + "' does not exist");
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw IoError("dataset directory '" + path + "' holds no .ppm/.pgm files");
    }
    for (const auto& f : files) {
        images_.push_back(fit_to_dims(load_pnm(f), dims, f));
    }
}

std::vector<double> DirectorySource::image(std::uint64_t index) const {
    return images_[index % images_.size()];
}

std::unique_ptr<DataSource> open_source(const std::string& source_spec, ImageDims dims,
                                        std::uint64_t seed) {
    if (source_spec == "procedural") {
        return std::make_unique<ProceduralSource>(dims, seed);
    }
    return std::make_unique<DirectorySource>(source_spec, dims);
}

}  // namespace jscc
