#include <microchar/nn/checkpoint.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>

namespace microchar::nn {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_le(std::ofstream& out, T v) {
    // Little-endian host assumed (x86); bytes written as-is.
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const std::string& arch_json,
                     const std::vector<ParamRef<float>>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint64_t>(arch_json.size()));
    out.write(arch_json.data(), static_cast<std::streamsize>(arch_json.size()));
    write_le(out, static_cast<std::uint64_t>(params.size()));
    for (const auto& p : params) {
        write_le(out, static_cast<std::uint64_t>(p.value->size()));
        out.write(reinterpret_cast<const char*>(p.value->data()),
                  static_cast<std::streamsize>(p.value->size() * sizeof(float)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NoCheckpoint("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw NoCheckpoint("bad checkpoint magic: " + path);
    }
    const auto version = read_le<std::uint32_t>(in);
    if (version != kVersion) throw NoCheckpoint("unsupported checkpoint version: " + path);

    Checkpoint ckpt;
    const auto json_len = read_le<std::uint64_t>(in);
    ckpt.arch_json.resize(json_len);
    in.read(ckpt.arch_json.data(), static_cast<std::streamsize>(json_len));

    const auto n_params = read_le<std::uint64_t>(in);
    ckpt.blobs.resize(n_params);
    for (auto& blob : ckpt.blobs) {
        const auto n = read_le<std::uint64_t>(in);
        blob.resize(n);
        in.read(reinterpret_cast<char*>(blob.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
    }
    if (!in) throw NoCheckpoint("truncated checkpoint: " + path);
    return ckpt;
}

void restore_params(const Checkpoint& ckpt, const std::vector<ParamRef<float>>& params) {
    if (ckpt.blobs.size() != params.size()) {
        throw LengthMismatch("checkpoint parameter count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (ckpt.blobs[i].size() != params[i].value->size()) {
            throw LengthMismatch("checkpoint blob size mismatch");
        }
        *params[i].value = ckpt.blobs[i];
    }
}

void write_sidecar(const std::string& ckpt_path, const std::string& meta_json) {
    const std::string path = ckpt_path + ".meta.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sidecar: " + path);
    out << meta_json << "\n";
}

} // namespace microchar::nn
