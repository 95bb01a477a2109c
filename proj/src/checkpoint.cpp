#include "f3kit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "f3kit/error.hpp"

namespace f3kit {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', '3', 'C', 'K'};
constexpr uint32_t kVersion = 1;

uint32_t crc_table_entry(uint32_t i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    return c;
}

struct Writer {
    std::vector<uint8_t> buf;
    void bytes(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f64s(const double* p, size_t n) { bytes(p, n * sizeof(double)); }
};

struct Reader {
    const uint8_t* p;
    size_t left;
    const std::filesystem::path& path;

    void bytes(void* out, size_t n) {
        if (left < n) {
            fail(ErrorKind::data_format, "truncated checkpoint " + path.string());
        }
        std::memcpy(out, p, n);
        p += n;
        left -= n;
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
};

nlohmann::json config_json(const ModelConfig& c) {
    return {{"channels", c.channels},
            {"stem_width", c.stem_width},
            {"stage_widths", c.stage_widths},
            {"decoders", c.decoders},
            {"fusion", c.fusion == FusionMode::cross ? "cross" : "add"},
            {"share_decoders", c.share_decoders},
            {"train_size", c.train_size}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.channels = j.at("channels");
    c.stem_width = j.at("stem_width");
    auto widths = j.at("stage_widths");
    for (int i = 0; i < 4; ++i) c.stage_widths[i] = widths.at(i);
    c.decoders = j.at("decoders");
    c.fusion = j.at("fusion") == "cross" ? FusionMode::cross : FusionMode::add;
    c.share_decoders = j.at("share_decoders");
    c.train_size = j.at("train_size");
    return c;
}

}  // namespace

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
    static const auto table = [] {
        std::array<uint32_t, 256> t;
        for (uint32_t i = 0; i < 256; ++i) t[i] = crc_table_entry(i);
        return t;
    }();
    uint32_t c = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

void save_checkpoint(Model& m, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.str(config_json(m.cfg).dump());

    auto params = named_params(m);
    auto buffers = named_buffers(m);
    w.u32(static_cast<uint32_t>(params.size() + buffers.size()));
    for (auto& p : params) {
        w.str(p.name);
        const Shape& s = p.tensor.shape();
        w.u32(s.n);
        w.u32(s.c);
        w.u32(s.h);
        w.u32(s.w);
        w.f64s(p.tensor.data(), static_cast<size_t>(s.numel()));
    }
    for (auto& b : buffers) {
        w.str(b.name);
        w.u32(1);
        w.u32(static_cast<uint32_t>(b.data->size()));
        w.u32(1);
        w.u32(1);
        w.f64s(b.data->data(), b.data->size());
    }
    w.u32(crc32(w.buf.data(), w.buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(w.buf.data()),
              static_cast<std::streamsize>(w.buf.size()));
    if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open checkpoint " + path.string());
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 12) fail(ErrorKind::data_format, "truncated checkpoint " + path.string());

    uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
    if (crc32(buf.data(), buf.size() - 4) != stored) {
        fail(ErrorKind::data_format, "checkpoint checksum mismatch: " + path.string());
    }

    Reader r{buf.data(), buf.size() - 4, path};
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        fail(ErrorKind::data_format, "not a checkpoint file: " + path.string());
    }
    uint32_t version = r.u32();
    if (version != kVersion) {
        fail(ErrorKind::data_format,
             "unsupported checkpoint version " + std::to_string(version));
    }
    ModelConfig cfg;
    try {
        cfg = config_from_json(nlohmann::json::parse(r.str()));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data_format, "bad checkpoint config: " + std::string(e.what()));
    }

    Model m = make_model(cfg, 0);
    auto params = named_params(m);
    auto buffers = named_buffers(m);
    std::map<std::string, ParamRef*> by_name;
    std::map<std::string, BufferRef*> buf_by_name;
    for (auto& p : params) by_name[p.name] = &p;
    for (auto& b : buffers) buf_by_name[b.name] = &b;

    uint32_t records = r.u32();
    size_t filled = 0;
    for (uint32_t i = 0; i < records; ++i) {
        std::string name = r.str();
        Shape s{static_cast<int>(r.u32()), static_cast<int>(r.u32()), static_cast<int>(r.u32()),
                static_cast<int>(r.u32())};
        if (auto it = by_name.find(name); it != by_name.end()) {
            if (!(it->second->tensor.shape() == s)) {
                fail(ErrorKind::data_format, "checkpoint record " + name + " has shape " +
                                                 s.str() + ", model expects " +
                                                 it->second->tensor.shape().str());
            }
            r.bytes(it->second->tensor.data_mut(), static_cast<size_t>(s.numel()) * 8);
            ++filled;
        } else if (auto bit = buf_by_name.find(name); bit != buf_by_name.end()) {
            if (s.numel() != static_cast<int64_t>(bit->second->data->size())) {
                fail(ErrorKind::data_format, "checkpoint buffer " + name + " has wrong length");
            }
            r.bytes(bit->second->data->data(), static_cast<size_t>(s.numel()) * 8);
            ++filled;
        } else {
            fail(ErrorKind::data_format, "checkpoint record " + name + " not in model");
        }
    }
    if (filled != params.size() + buffers.size()) {
        fail(ErrorKind::data_format, "checkpoint is missing parameter records");
    }
    return m;
}

}  // namespace f3kit
