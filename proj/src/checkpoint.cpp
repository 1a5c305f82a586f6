#include "foodfuse/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>

namespace foodfuse {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written by memcpy and the format is little-endian");

namespace {

constexpr char kMagic[8] = {'F', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kFormatVersion = 1;

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    for (int i = 0; i < 4; i++) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, uint64_t v) {
    for (int i = 0; i < 8; i++) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
public:
    Reader(const unsigned char* p, size_t n) : p_(p), n_(n) {}

    void need(size_t k) const {
        if (pos_ + k > n_) throw IoError("checkpoint: truncated file");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) v |= static_cast<uint32_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    uint8_t u8() {
        need(1);
        return p_[pos_++];
    }
    const unsigned char* bytes(size_t k) {
        need(k);
        const unsigned char* r = p_ + pos_;
        pos_ += k;
        return r;
    }
    size_t pos() const { return pos_; }

private:
    const unsigned char* p_;
    size_t n_;
    size_t pos_ = 0;
};

size_t scalar_size(BlobType t) { return t == BlobType::f32 ? 4 : 8; }

}  // namespace

int64_t CheckpointBlob::count() const { return numel(shape); }

std::vector<float> CheckpointBlob::as_f32() const {
    if (dtype != BlobType::f32)
        throw ConfigError("checkpoint blob " + name + " is not 32-bit float data");
    std::vector<float> out(static_cast<size_t>(count()));
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

std::vector<double> CheckpointBlob::as_f64() const {
    if (dtype != BlobType::f64)
        throw ConfigError("checkpoint blob " + name + " is not 64-bit float data");
    std::vector<double> out(static_cast<size_t>(count()));
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

CheckpointWriter::CheckpointWriter(nlohmann::json header) : header_(std::move(header)) {
    header_["format_version"] = kFormatVersion;
}

void CheckpointWriter::check_new_name(const std::string& name) const {
    if (name.empty() || name.size() > 0xffff)
        throw ConfigError("checkpoint: blob name empty or too long");
    for (const auto& b : blobs_)
        if (b.name == name) throw ConfigError("checkpoint: duplicate blob name " + name);
}

void CheckpointWriter::add_f32(const std::string& name, const Shape& shape, const float* data,
                               int64_t n) {
    check_new_name(name);
    if (numel(shape) != n)
        throw ShapeError("checkpoint add", "blob " + name + " shape " + shape_str(shape) +
                                               " does not hold " + std::to_string(n) + " values");
    CheckpointBlob b;
    b.name = name;
    b.dtype = BlobType::f32;
    b.shape = shape;
    b.raw.resize(static_cast<size_t>(n) * 4);
    std::memcpy(b.raw.data(), data, b.raw.size());
    blobs_.push_back(std::move(b));
}

void CheckpointWriter::add_f64(const std::string& name, const Shape& shape, const double* data,
                               int64_t n) {
    check_new_name(name);
    if (numel(shape) != n)
        throw ShapeError("checkpoint add", "blob " + name + " shape " + shape_str(shape) +
                                               " does not hold " + std::to_string(n) + " values");
    CheckpointBlob b;
    b.name = name;
    b.dtype = BlobType::f64;
    b.shape = shape;
    b.raw.resize(static_cast<size_t>(n) * 8);
    std::memcpy(b.raw.data(), data, b.raw.size());
    blobs_.push_back(std::move(b));
}

void CheckpointWriter::write(const std::string& path) const {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    const std::string header = header_.dump();
    put_u32(out, static_cast<uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    put_u32(out, static_cast<uint32_t>(blobs_.size()));
    for (const auto& b : blobs_) {
        put_u16(out, static_cast<uint16_t>(b.name.size()));
        out.insert(out.end(), b.name.begin(), b.name.end());
        out.push_back(static_cast<unsigned char>(b.dtype));
        out.push_back(static_cast<unsigned char>(b.shape.size()));
        for (int d : b.shape) put_u32(out, static_cast<uint32_t>(d));
        put_u64(out, b.raw.size());
        out.insert(out.end(), b.raw.begin(), b.raw.end());
    }
    const uint32_t crc =
        static_cast<uint32_t>(crc32(0, out.data(), static_cast<uInt>(out.size())));
    put_u32(out, crc);

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("checkpoint: cannot write " + path);
    const size_t put = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (put != out.size()) throw IoError("checkpoint: short write to " + path);
}

const CheckpointBlob* Checkpoint::find(const std::string& name) const {
    for (const auto& b : blobs)
        if (b.name == name) return &b;
    return nullptr;
}

Checkpoint Checkpoint::read(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("checkpoint: cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    const long sz = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<unsigned char> bytes(static_cast<size_t>(sz > 0 ? sz : 0));
    const size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (got != bytes.size()) throw IoError("checkpoint: short read from " + path);

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw IoError("checkpoint: " + path + " is not a checkpoint container");

    const size_t body = bytes.size() - 4;
    uint32_t stored = 0;
    for (int i = 0; i < 4; i++) stored |= static_cast<uint32_t>(bytes[body + i]) << (8 * i);
    const uint32_t actual =
        static_cast<uint32_t>(crc32(0, bytes.data(), static_cast<uInt>(body)));
    if (stored != actual)
        throw IoError("checkpoint: " + path + " failed its integrity checksum");

    Reader r(bytes.data(), body);
    r.bytes(8);  // magic
    const uint32_t hlen = r.u32();
    const unsigned char* hp = r.bytes(hlen);
    Checkpoint ck;
    try {
        ck.header = nlohmann::json::parse(hp, hp + hlen);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint: bad header JSON: " + std::string(e.what()));
    }
    if (!ck.header.contains("format_version") ||
        ck.header["format_version"].get<int>() != kFormatVersion)
        throw ConfigError("checkpoint: unsupported format version");

    const uint32_t nblobs = r.u32();
    ck.blobs.reserve(nblobs);
    for (uint32_t i = 0; i < nblobs; i++) {
        CheckpointBlob b;
        const uint16_t nlen = r.u16();
        const unsigned char* np = r.bytes(nlen);
        b.name.assign(reinterpret_cast<const char*>(np), nlen);
        const uint8_t dt = r.u8();
        if (dt > 1) throw IoError("checkpoint: blob " + b.name + " has unknown dtype");
        b.dtype = static_cast<BlobType>(dt);
        const uint8_t rank = r.u8();
        b.shape.resize(rank);
        for (int d = 0; d < rank; d++) b.shape[static_cast<size_t>(d)] = static_cast<int>(r.u32());
        const uint64_t plen = r.u64();
        if (plen != static_cast<uint64_t>(numel(b.shape)) * scalar_size(b.dtype))
            throw IoError("checkpoint: blob " + b.name + " payload length mismatch");
        const unsigned char* pp = r.bytes(plen);
        b.raw.assign(pp, pp + plen);
        ck.blobs.push_back(std::move(b));
    }
    if (r.pos() != body) throw IoError("checkpoint: trailing bytes after blobs");
    return ck;
}

void add_params(CheckpointWriter& w, const ParamRegistry32& params) {
    for (const auto& p : params.items())
        w.add_f32("param/" + p.name, p.tensor.shape(), p.tensor.data(), p.tensor.numel());
}

void add_adam_state(CheckpointWriter& w, const Adam32& opt) {
    for (const auto& [name, st] : opt.states()) {
        const Shape s = {static_cast<int>(st.m.size())};
        w.add_f64("adam/m/" + name, s, st.m.data(), static_cast<int64_t>(st.m.size()));
        w.add_f64("adam/v/" + name, s, st.v.data(), static_cast<int64_t>(st.v.size()));
        const double t = static_cast<double>(st.t);
        w.add_f64("adam/t/" + name, {1}, &t, 1);
    }
}

void load_params(const Checkpoint& ck, ParamRegistry32& params) {
    for (auto& p : params.items_mut()) {
        const CheckpointBlob* b = ck.find("param/" + p.name);
        if (!b) throw ConfigError("checkpoint: missing parameter " + p.name);
        if (b->shape != p.tensor.shape())
            throw ConfigError("checkpoint: parameter " + p.name + " has shape " +
                              shape_str(b->shape) + ", model expects " +
                              shape_str(p.tensor.shape()));
        const std::vector<float> vals = b->as_f32();
        std::memcpy(p.tensor.data(), vals.data(), vals.size() * sizeof(float));
    }
}

void load_adam_state(const Checkpoint& ck, Adam32& opt) {
    for (const auto& b : ck.blobs) {
        if (b.name.rfind("adam/m/", 0) != 0) continue;
        const std::string pname = b.name.substr(7);
        const CheckpointBlob* vm = ck.find("adam/v/" + pname);
        const CheckpointBlob* vt = ck.find("adam/t/" + pname);
        if (!vm || !vt)
            throw ConfigError("checkpoint: incomplete optimizer state for " + pname);
        Adam32::State st;
        st.m = b.as_f64();
        st.v = vm->as_f64();
        st.t = static_cast<int64_t>(vt->as_f64().at(0));
        if (st.m.size() != st.v.size())
            throw ConfigError("checkpoint: optimizer moment sizes differ for " + pname);
        opt.restore_state(pname, std::move(st));
    }
}

}  // namespace foodfuse
