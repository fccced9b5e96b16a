#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "jscc/error.hpp"

namespace jscc {

struct ImageDims {
    std::size_t c = 3, h = 32, w = 32;
    std::size_t numel() const { return c * h * w; }
};

// Deterministic image supplier: image(index) is a pure function of
// (source construction, index).
class DataSource {
public:
    virtual ~DataSource() = default;
    virtual std::vector<double> image(std::uint64_t index) const = 0;  // values in [0,1]
    virtual std::size_t size() const = 0;                              // 0 = unbounded
    const ImageDims& dims() const { return dims_; }

protected:
    explicit DataSource(ImageDims dims) : dims_(dims) {}
    ImageDims dims_;
};

// Procedural corpus: linear gradients, checkerboards and band-limited
// textures. Unbounded; every index is a fresh image drawn from the seed.
class ProceduralSource final : public DataSource {
public:
    ProceduralSource(ImageDims dims, std::uint64_t seed);
    std::vector<double> image(std::uint64_t index) const override;
    std::size_t size() const override { return 0; }

private:
    std::uint64_t seed_;
};

struct RawImage {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> pixels;  // normalized to [0,1], channel-major
};

// PPM/PGM reader (P2/P3 ASCII, P5/P6 binary, maxval up to 65535).
RawImage load_pnm(const std::string& path);

// Center-crop to dims, replicating grayscale across target channels. Errors
// name the offending file.
std::vector<double> fit_to_dims(const RawImage& raw, const ImageDims& dims,
                                const std::string& path);

// Directory of PPM/PGM files, loaded eagerly (a corrupt or undersized file
// fails the whole open, naming the file). Images are center-cropped to the
// requested dims; grayscale files are replicated across target channels.
class DirectorySource final : public DataSource {
public:
    DirectorySource(const std::string& path, ImageDims dims);
    std::vector<double> image(std::uint64_t index) const override;
    std::size_t size() const override { return images_.size(); }

private:
    std::vector<std::vector<double>> images_;
};

// source_spec: "procedural" or a directory path.
std::unique_ptr<DataSource> open_source(const std::string& source_spec, ImageDims dims,
                                        std::uint64_t seed);

}  // namespace jscc
