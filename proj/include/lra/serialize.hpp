#pragma once

// Flat binary network container plus a JSON architecture manifest.
//
// model.bin layout (integers and floats little-endian, no padding):
//
//   offset 0   4 bytes   magic "LRAN"
//          4   u32       format version (1)
//          8   u32       input dimension
//         12   u32       layer count n
//   then n layer records of 22 bytes each:
//          u32 in_dim, u32 out_dim, u32 activation tag, u32 discrete-op tag,
//          u32 block size, u8 loss tag, u8 has_feedback
//   then n payload blocks, each raw IEEE-754 f64 little-endian:
//          W row-major (out_dim*in_dim), b (out_dim),
//          feedback row-major (in_dim*out_dim, only when has_feedback = 1)
//
// Round-trips are bit-exact. The manifest (model.json) carries the same
// architecture in readable form; weights live only in the binary file.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lra/error.hpp"
#include "lra/network.hpp"

namespace lra {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

inline void put_f64(std::ostream& os, double d) {
    const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError(path + ": truncated header");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint8_t get_u8(std::istream& is, const std::string& path) {
    char c;
    if (!is.read(&c, 1)) throw FormatError(path + ": truncated header");
    return static_cast<std::uint8_t>(c);
}

inline double get_f64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError(path + ": truncated payload");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) put_f64(os, m.data()[i]);
}

inline Matrix get_matrix(std::istream& is, std::size_t rows, std::size_t cols,
                         const std::string& path) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = get_f64(is, path);
    return m;
}

}  // namespace detail

inline void save_network(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os.write("LRAN", 4);
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(net.input_dim()));
    detail::put_u32(os, static_cast<std::uint32_t>(net.depth()));
    for (const auto& l : net.layers()) {
        detail::put_u32(os, static_cast<std::uint32_t>(l.in_dim()));
        detail::put_u32(os, static_cast<std::uint32_t>(l.out_dim()));
        detail::put_u32(os, static_cast<std::uint32_t>(l.f));
        detail::put_u32(os, static_cast<std::uint32_t>(l.g.kind));
        detail::put_u32(os, static_cast<std::uint32_t>(l.g.block_size));
        detail::put_u8(os, static_cast<std::uint8_t>(l.loss));
        detail::put_u8(os, l.feedback ? 1 : 0);
    }
    for (const auto& l : net.layers()) {
        detail::put_matrix(os, l.w);
        detail::put_matrix(os, l.b);
        if (l.feedback) detail::put_matrix(os, *l.feedback);
    }
    if (!os) throw IoError("write failed: " + path);
}

inline Network load_network(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "LRAN", 4) != 0)
        throw FormatError(path + ": bad magic");
    const std::uint32_t version = detail::get_u32(is, path);
    if (version != 1) throw FormatError(path + ": unsupported version " + std::to_string(version));
    const std::uint32_t input_dim = detail::get_u32(is, path);
    const std::uint32_t n = detail::get_u32(is, path);
    if (n == 0) throw FormatError(path + ": zero layers");

    struct Rec {
        std::uint32_t in, out, f, g, block;
        std::uint8_t loss, has_feedback;
    };
    std::vector<Rec> recs(n);
    std::vector<LayerSpec> specs(n);
    std::uint32_t expect_in = input_dim;
    for (std::uint32_t i = 0; i < n; ++i) {
        Rec& r = recs[i];
        r.in = detail::get_u32(is, path);
        r.out = detail::get_u32(is, path);
        r.f = detail::get_u32(is, path);
        r.g = detail::get_u32(is, path);
        r.block = detail::get_u32(is, path);
        r.loss = detail::get_u8(is, path);
        r.has_feedback = detail::get_u8(is, path);
        if (r.in != expect_in)
            throw FormatError(path + ": layer " + std::to_string(i + 1) + " input width " +
                              std::to_string(r.in) + " breaks the chain");
        if (r.f > static_cast<std::uint32_t>(Act::softmax) ||
            r.g > static_cast<std::uint32_t>(DiscreteKind::slwta_soft) ||
            r.loss > static_cast<std::uint8_t>(LossKind::cross_entropy) || r.has_feedback > 1)
            throw FormatError(path + ": layer " + std::to_string(i + 1) + " has invalid tags");
        expect_in = r.out;
        specs[i].width = r.out;
        specs[i].f = static_cast<Act>(r.f);
        specs[i].g.kind = static_cast<DiscreteKind>(r.g);
        specs[i].g.block_size = r.block;
        specs[i].loss = static_cast<LossKind>(r.loss);
    }
    Network net(input_dim, specs);
    for (std::uint32_t i = 0; i < n; ++i) {
        Layer& l = net.layer(i);
        l.w = detail::get_matrix(is, recs[i].out, recs[i].in, path);
        l.b = detail::get_matrix(is, 1, recs[i].out, path);
        if (recs[i].has_feedback) l.feedback = detail::get_matrix(is, recs[i].in, recs[i].out, path);
    }
    char probe;
    if (is.read(&probe, 1)) throw FormatError(path + ": trailing bytes");
    return net;
}

inline nlohmann::json architecture_manifest(const Network& net) {
    nlohmann::json j;
    j["format"] = "lran-v1";
    j["input_dim"] = net.input_dim();
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers()) {
        nlohmann::json lj;
        lj["width"] = l.out_dim();
        lj["activation"] = act_name(l.f);
        lj["discrete"] = discrete_name(l.g.kind);
        if (l.g.kind == DiscreteKind::lwta_hard || l.g.kind == DiscreteKind::slwta_soft)
            lj["block_size"] = l.g.block_size;
        lj["loss"] = loss_name(l.loss);
        lj["feedback"] = l.feedback.has_value();
        layers.push_back(lj);
    }
    j["layers"] = layers;
    return j;
}

inline void save_manifest(const Network& net, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << architecture_manifest(net).dump(2) << "\n";
}

}  // namespace lra
