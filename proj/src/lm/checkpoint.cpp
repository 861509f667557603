#include "plad/lm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace plad::lm {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'A', 'D', 'C', 'K', 'P', 'T'};

template <class U>
void put_le(std::ostream& out, U v) {
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
    unsigned char bytes[sizeof(U)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(U));
    if (!in) throw CheckpointError("truncated checkpoint");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }
std::string get_str(std::istream& in) {
    const auto n = get_u32(in);
    if (n > (1u << 20)) throw CheckpointError("implausible string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw CheckpointError("truncated checkpoint");
    return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& model) {
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kCheckpointVersion);
    put_u64(out, model.stamp.config_hash);
    put_u64(out, model.stamp.seed);
    put_str(out, model.stamp.tag);
    const ArchConfig& a = model.arch;
    put_u32(out, static_cast<std::uint32_t>(a.n_layers));
    put_u32(out, static_cast<std::uint32_t>(a.width));
    put_u32(out, static_cast<std::uint32_t>(a.n_heads));
    put_u32(out, static_cast<std::uint32_t>(a.max_len));
    put_str(out, a.positional);
    put_u32(out, static_cast<std::uint32_t>(model.vocab.size()));
    for (const auto& tok : model.vocab.tokens()) put_str(out, tok);
    put_u32(out, static_cast<std::uint32_t>(model.vocab.pad()));
    put_u32(out, static_cast<std::uint32_t>(model.vocab.bos()));
    put_u32(out, static_cast<std::uint32_t>(model.vocab.eos()));
    put_u32(out, static_cast<std::uint32_t>(model.tensors.size()));
    for (std::size_t i = 0; i < model.tensors.size(); ++i) {
        const Tensor& t = model.tensors[i];
        put_str(out, layout::name(a.n_layers, i));
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put_u64(out, d);
        for (double v : t.values()) put_f64(out, v);
    }
    if (!out) throw CheckpointError("failed writing checkpoint");
}

ModelParams read_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint (bad magic)");
    const auto version = get_u32(in);
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    ModelParams m;
    m.stamp.config_hash = get_u64(in);
    m.stamp.seed = get_u64(in);
    m.stamp.tag = get_str(in);
    m.arch.n_layers = static_cast<int>(get_u32(in));
    m.arch.width = static_cast<int>(get_u32(in));
    m.arch.n_heads = static_cast<int>(get_u32(in));
    m.arch.max_len = static_cast<int>(get_u32(in));
    m.arch.positional = get_str(in);
    m.arch.validate();
    const auto vsize = get_u32(in);
    std::vector<std::string> tokens;
    tokens.reserve(vsize);
    for (std::uint32_t i = 0; i < vsize; ++i) tokens.push_back(get_str(in));
    const auto pad = static_cast<int>(get_u32(in));
    const auto bos = static_cast<int>(get_u32(in));
    const auto eos = static_cast<int>(get_u32(in));
    m.vocab = Vocabulary::from_tokens(std::move(tokens), pad, bos, eos);
    const auto count = get_u32(in);
    if (count != layout::tensor_count(m.arch.n_layers)) throw CheckpointError("tensor count does not match architecture");
    for (std::size_t i = 0; i < count; ++i) {
        const auto name = get_str(in);
        if (name != layout::name(m.arch.n_layers, i)) {
            throw CheckpointError("unexpected tensor '" + name + "' at position " + std::to_string(i));
        }
        const auto rank = get_u32(in);
        num::Shape shape(rank);
        for (auto& d : shape) d = get_u64(in);
        if (shape != layout::shape(m.arch, m.vocab.size(), i)) {
            throw CheckpointError("tensor '" + name + "' has shape " + num::shape_string(shape));
        }
        std::vector<double> values(num::shape_product(shape));
        for (double& v : values) v = get_f64(in);
        m.tensors.emplace_back(std::move(shape), std::move(values));
    }
    if (!m.all_finite()) throw CheckpointError("checkpoint contains non-finite parameters");
    return m;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
    write_checkpoint(out, model);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace plad::lm
