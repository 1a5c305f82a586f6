#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "foodfuse/adam.hpp"
#include "foodfuse/params.hpp"

namespace foodfuse {

// Single-file checkpoint container:
//   magic "FFCKPT01"
//   u32 header length, header JSON (format_version, config_digest, config)
//   u32 blob count
//   per blob: u16 name length + name, u8 dtype (0=f32, 1=f64), u8 rank,
//             u32 per-axis extents, u64 payload byte length, raw payload
//   u32 crc32 over everything before it
// All integers and scalar payloads are little-endian.

enum class BlobType : uint8_t { f32 = 0, f64 = 1 };

struct CheckpointBlob {
    std::string name;
    BlobType dtype = BlobType::f32;
    Shape shape;
    std::vector<unsigned char> raw;

    int64_t count() const;
    std::vector<float> as_f32() const;    // requires dtype f32
    std::vector<double> as_f64() const;   // requires dtype f64
};

class CheckpointWriter {
public:
    explicit CheckpointWriter(nlohmann::json header);

    void add_f32(const std::string& name, const Shape& shape, const float* data, int64_t n);
    void add_f64(const std::string& name, const Shape& shape, const double* data, int64_t n);

    void write(const std::string& path) const;

private:
    void check_new_name(const std::string& name) const;

    nlohmann::json header_;
    std::vector<CheckpointBlob> blobs_;
};

struct Checkpoint {
    nlohmann::json header;
    std::vector<CheckpointBlob> blobs;

    const CheckpointBlob* find(const std::string& name) const;
    static Checkpoint read(const std::string& path);
};

// Registry/optimizer adapters. Parameter tensors are stored under
// "param/<name>" as f32; Adam moments under "adam/{m,v,t}/<name>" as f64.
void add_params(CheckpointWriter& w, const ParamRegistry32& params);
void add_adam_state(CheckpointWriter& w, const Adam32& opt);
// Strict: every registry entry must be present with a matching shape.
void load_params(const Checkpoint& ck, ParamRegistry32& params);
// Restores moment buffers for any parameter that has them in the file.
void load_adam_state(const Checkpoint& ck, Adam32& opt);

}  // namespace foodfuse
