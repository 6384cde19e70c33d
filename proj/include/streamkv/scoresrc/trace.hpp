#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "streamkv/errors.hpp"
#include "streamkv/scoresrc/toy_model.hpp"

namespace streamkv::scoresrc {

// StreamTrace binary format: 32-byte header {magic "SKVT", version, L, M,
// d_model, d, frame_count, reserved} then records in (frame, layer) order,
// each {frame u32, layer u32, hidden, keys, values, raw_scores} as
// little-endian f64 row-major. All integers little-endian u32.
struct TraceHeader {
    std::uint32_t version = 1;
    std::uint32_t num_layers = 0;
    std::uint32_t tokens_per_frame = 0;
    std::uint32_t d_model = 0;
    std::uint32_t d = 0;
    std::uint32_t frame_count = 0;
};

namespace detail {

constexpr char kMagic[4] = {'S', 'K', 'V', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i)
        bits = (bits << 8) | static_cast<std::uint64_t>(p[i]);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void save_trace(const std::vector<FrameActivations>& records,
                       const std::string& path) {
    std::uint32_t L = 0, M = 0, d_model = 0, d = 0, frames = 0;
    if (!records.empty()) {
        M = static_cast<std::uint32_t>(records.front().hidden.rows());
        d_model = static_cast<std::uint32_t>(records.front().hidden.cols());
        d = static_cast<std::uint32_t>(records.front().keys.cols());
        for (const auto& r : records) {
            L = std::max(L, static_cast<std::uint32_t>(r.layer_index) + 1);
            frames = std::max(frames, static_cast<std::uint32_t>(r.frame_index) + 1);
            if (r.hidden.rows() != M || r.hidden.cols() != d_model ||
                r.keys.rows() != M || r.keys.cols() != d ||
                r.values.rows() != M || r.values.cols() != d ||
                r.raw_scores.size() != M)
                throw DimensionMismatchError("save_trace: non-uniform records");
        }
    }

    std::string buf;
    buf.append(detail::kMagic, 4);
    detail::put_u32(buf, detail::kVersion);
    detail::put_u32(buf, L);
    detail::put_u32(buf, M);
    detail::put_u32(buf, d_model);
    detail::put_u32(buf, d);
    detail::put_u32(buf, frames);
    detail::put_u32(buf, 0);  // reserved

    for (const auto& r : records) {
        detail::put_u32(buf, static_cast<std::uint32_t>(r.frame_index));
        detail::put_u32(buf, static_cast<std::uint32_t>(r.layer_index));
        for (double v : r.hidden.data()) detail::put_f64(buf, v);
        for (double v : r.keys.data()) detail::put_f64(buf, v);
        for (double v : r.values.data()) detail::put_f64(buf, v);
        for (double v : r.raw_scores) detail::put_f64(buf, v);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write: " + path);
}

// Streaming reader; holds one record in memory at a time.
class TraceReader {
public:
    explicit TraceReader(const std::string& path)
        : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open trace: " + path);
        unsigned char hdr[32];
        in_.read(reinterpret_cast<char*>(hdr), 32);
        if (in_.gcount() != 32)
            throw TraceFormatError("truncated header",
                                   static_cast<std::size_t>(in_.gcount()));
        if (std::memcmp(hdr, detail::kMagic, 4) != 0)
            throw TraceFormatError("bad magic", 0);
        header_.version = detail::get_u32(hdr + 4);
        if (header_.version != detail::kVersion)
            throw TraceFormatError("unsupported version", 4);
        header_.num_layers = detail::get_u32(hdr + 8);
        header_.tokens_per_frame = detail::get_u32(hdr + 12);
        header_.d_model = detail::get_u32(hdr + 16);
        header_.d = detail::get_u32(hdr + 20);
        header_.frame_count = detail::get_u32(hdr + 24);
        offset_ = 32;
    }

    const TraceHeader& header() const { return header_; }

    std::optional<FrameActivations> next() {
        if (records_read_ ==
            static_cast<std::uint64_t>(header_.frame_count) * header_.num_layers)
            return std::nullopt;
        unsigned char idx[8];
        in_.read(reinterpret_cast<char*>(idx), 8);
        if (in_.gcount() == 0 && in_.eof())
            throw TraceFormatError("truncated: missing record", offset_);
        if (in_.gcount() != 8)
            throw TraceFormatError("truncated record index",
                                   offset_ + static_cast<std::size_t>(in_.gcount()));
        FrameActivations rec;
        rec.frame_index = static_cast<int>(detail::get_u32(idx));
        rec.layer_index = static_cast<int>(detail::get_u32(idx + 4));
        if (rec.frame_index >= static_cast<int>(header_.frame_count))
            throw TraceFormatError("frame index out of range", offset_);
        if (rec.layer_index >= static_cast<int>(header_.num_layers))
            throw TraceFormatError("layer index out of range", offset_ + 4);
        const std::uint64_t expected = records_read_;
        const std::uint64_t got =
            static_cast<std::uint64_t>(rec.frame_index) * header_.num_layers +
            static_cast<std::uint64_t>(rec.layer_index);
        if (got != expected)
            throw TraceFormatError("records out of (frame, layer) order",
                                   offset_);
        offset_ += 8;

        const std::size_t m = header_.tokens_per_frame;
        rec.hidden = read_matrix(m, header_.d_model);
        rec.keys = read_matrix(m, header_.d);
        rec.values = read_matrix(m, header_.d);
        rec.raw_scores.resize(m);
        read_doubles(rec.raw_scores.data(), m);
        ++records_read_;
        return rec;
    }

private:
    Matrix read_matrix(std::size_t r, std::size_t c) {
        Matrix m(r, c);
        read_doubles(m.data().data(), r * c);
        return m;
    }

    void read_doubles(double* dst, std::size_t count) {
        buf_.resize(count * 8);
        in_.read(reinterpret_cast<char*>(buf_.data()),
                 static_cast<std::streamsize>(buf_.size()));
        if (static_cast<std::size_t>(in_.gcount()) != buf_.size())
            throw TraceFormatError("truncated record payload",
                                   offset_ + static_cast<std::size_t>(in_.gcount()));
        for (std::size_t i = 0; i < count; ++i)
            dst[i] = detail::get_f64(buf_.data() + i * 8);
        offset_ += buf_.size();
    }

    std::ifstream in_;
    TraceHeader header_;
    std::size_t offset_ = 0;
    std::uint64_t records_read_ = 0;
    std::vector<unsigned char> buf_;
};

inline std::vector<FrameActivations> load_trace(const std::string& path) {
    TraceReader reader(path);
    std::vector<FrameActivations> out;
    while (auto rec = reader.next()) out.push_back(std::move(*rec));
    return out;
}

}  // namespace streamkv::scoresrc
