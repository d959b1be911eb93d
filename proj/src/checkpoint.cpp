// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace splatir {
namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, const std::filesystem::path& path, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw InputError("checkpoint truncated: " + path.string());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write checkpoint: " + tmp.string());
        out.write(kMagic, sizeof(kMagic));
        write_pod(out, kVersion);
        write_pod(out, static_cast<std::int32_t>(ckpt.stage));
        write_pod(out, ckpt.iteration);
        write_pod(out, static_cast<std::uint64_t>(ckpt.scene.size()));
        const auto& raw = ckpt.scene.raw_block();
        out.write(reinterpret_cast<const char*>(raw.data()),
                  static_cast<std::streamsize>(raw.size() * sizeof(double)));
        write_pod(out, static_cast<std::uint8_t>(ckpt.has_mlp ? 1 : 0));
        if (ckpt.has_mlp) {
            const std::vector<double>& params = ckpt.mlp.params();
            write_pod(out, static_cast<std::uint64_t>(params.size()));
            out.write(reinterpret_cast<const char*>(params.data()),
                      static_cast<std::streamsize>(params.size() * sizeof(double)));
        }
        if (!out) throw InputError("short write on checkpoint: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint not found: " + path.string());
    char magic[4];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw InputError("not a checkpoint file: " + path.string());
    std::uint32_t version = 0;
    read_pod(in, path, version);
    if (version != kVersion)
        throw InputError("unsupported checkpoint version " + std::to_string(version) + ": " +
                         path.string());
    Checkpoint ckpt;
    std::int32_t stage = 0;
    read_pod(in, path, stage);
    ckpt.stage = stage;
    read_pod(in, path, ckpt.iteration);
    std::uint64_t count = 0;
    read_pod(in, path, count);
    // Reject counts the file cannot possibly back before allocating for them.
    const std::uint64_t file_size = std::filesystem::file_size(path);
    if (count > file_size / (kParamsPerGaussian * sizeof(double)) + 1)
        throw InputError("checkpoint truncated: " + path.string());
    ckpt.scene.resize(count);
    in.read(reinterpret_cast<char*>(ckpt.scene.raw_block().data()),
            static_cast<std::streamsize>(ckpt.scene.raw_block().size() * sizeof(double)));
    if (!in) throw InputError("checkpoint truncated: " + path.string());
    std::uint8_t has_mlp = 0;
    read_pod(in, path, has_mlp);
    ckpt.has_mlp = has_mlp != 0;
    if (ckpt.has_mlp) {
        std::uint64_t n = 0;
        read_pod(in, path, n);
        if (n != static_cast<std::uint64_t>(LightMLP::param_count()))
            throw InputError("checkpoint network size mismatch: " + path.string());
        in.read(reinterpret_cast<char*>(ckpt.mlp.params().data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw InputError("checkpoint truncated: " + path.string());
    }
    return ckpt;
}

}  // namespace splatir
