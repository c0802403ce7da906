#include "hls4pc/pcio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

namespace hls4pc {

namespace {

using json = nlohmann::json;

// Locale-independent double parse of a whole token.
bool parse_double(std::string_view token, double& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

bool parse_int(std::string_view token, std::int64_t& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) fields.push_back(line.substr(start, i - start));
    }
    return fields;
}

// Line reader tolerant of \r\n endings, tracking 1-based line numbers.
struct LineReader {
    std::istream& in;
    int line_no = 0;

    bool next(std::string& line) {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

    // Skips blank and '#' comment lines.
    bool next_content(std::string& line) {
        while (next(line)) {
            auto fields = split_ws(line);
            if (fields.empty()) continue;
            if (fields[0].front() == '#') continue;
            return true;
        }
        return false;
    }
};

}  // namespace

PointCloud parse_off(std::istream& in) {
    LineReader reader{in};
    std::string line;
    if (!reader.next_content(line)) throw Error(ErrorCategory::parse, "empty OFF stream", 1);

    auto fields = split_ws(line);
    std::string_view head = fields[0];
    std::int64_t n_vertices = -1, n_faces = 0, n_edges = 0;

    if (!head.starts_with("OFF")) {
        throw Error(ErrorCategory::parse, "missing OFF header", reader.line_no);
    }
    if (head.size() > 3 || fields.size() > 1) {
        // Fused header: counts share the first line ("OFF3 1 0" or "OFF 3 1 0").
        std::vector<std::string_view> counts;
        if (head.size() > 3) counts.push_back(head.substr(3));
        counts.insert(counts.end(), fields.begin() + 1, fields.end());
        if (counts.size() != 3 || !parse_int(counts[0], n_vertices) || !parse_int(counts[1], n_faces) ||
            !parse_int(counts[2], n_edges)) {
            throw Error(ErrorCategory::parse, "malformed OFF header counts", reader.line_no);
        }
    } else {
        if (!reader.next_content(line)) {
            throw Error(ErrorCategory::parse, "missing OFF counts line", reader.line_no + 1);
        }
        auto counts = split_ws(line);
        if (counts.size() != 3 || !parse_int(counts[0], n_vertices) || !parse_int(counts[1], n_faces) ||
            !parse_int(counts[2], n_edges)) {
            throw Error(ErrorCategory::parse, "malformed OFF counts line", reader.line_no);
        }
    }
    if (n_vertices < 1) throw Error(ErrorCategory::parse, "OFF vertex count must be >= 1", reader.line_no);

    PointCloud cloud;
    cloud.data.resize(n_vertices, 3);
    for (std::int64_t v = 0; v < n_vertices; ++v) {
        if (!reader.next_content(line)) {
            throw Error(ErrorCategory::parse,
                        "vertex count mismatch: expected " + std::to_string(n_vertices) + " vertices, got " +
                            std::to_string(v),
                        reader.line_no + 1);
        }
        auto vf = split_ws(line);
        if (vf.size() < 3) {
            throw Error(ErrorCategory::parse, "vertex line needs at least 3 coordinates", reader.line_no);
        }
        for (int c = 0; c < 3; ++c) {
            double value = 0;
            if (!parse_double(vf[static_cast<std::size_t>(c)], value)) {
                throw Error(ErrorCategory::parse, "non-numeric vertex coordinate", reader.line_no);
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorCategory::parse, "non-finite vertex coordinate", reader.line_no);
            }
            cloud.data(v, c) = value;
        }
    }
    // Faces ignored; only vertices feed the pipeline.
    return cloud;
}

PointCloud load_xyz(std::istream& in, int channels) {
    if (channels < 1) throw Error(ErrorCategory::config, "channels must be >= 1");
    LineReader reader{in};
    std::string line;
    std::vector<double> values;
    std::int64_t points = 0;
    while (reader.next_content(line)) {
        auto fields = split_ws(line);
        if (static_cast<int>(fields.size()) != channels) {
            throw Error(ErrorCategory::parse,
                        "ragged row: expected " + std::to_string(channels) + " fields, got " +
                            std::to_string(fields.size()),
                        reader.line_no);
        }
        for (auto f : fields) {
            double value = 0;
            if (!parse_double(f, value)) {
                throw Error(ErrorCategory::parse, "non-numeric value", reader.line_no);
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorCategory::parse, "non-finite value", reader.line_no);
            }
            values.push_back(value);
        }
        ++points;
    }
    if (points == 0) throw Error(ErrorCategory::parse, "empty point cloud", reader.line_no);
    PointCloud cloud;
    cloud.data.resize(points, channels);
    std::copy(values.begin(), values.end(), cloud.data.data());
    return cloud;
}

PointCloud load_cloud(const std::string& path, int channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path);
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".off") return parse_off(in);
    return load_xyz(in, channels);
}

const NamedTensor* WeightArchive::find(const std::string& name) const {
    for (const NamedTensor& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

const FxpTensor& WeightArchive::at(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (!t) throw Error(ErrorCategory::config, "archive is missing tensor '" + name + "'");
    return t->tensor;
}

void WeightArchive::add(std::string name, FxpTensor tensor) {
    if (contains(name)) throw Error(ErrorCategory::config, "duplicate tensor name '" + name + "'");
    check_format(tensor.format, true);
    tensors.push_back({std::move(name), std::move(tensor)});
}

std::int64_t WeightArchive::payload_bits() const {
    std::int64_t bits = 0;
    for (const NamedTensor& t : tensors) bits += t.tensor.size() * t.tensor.format.total_bits;
    return bits;
}

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
    out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }

bool get_bytes(std::istream& in, char* buf, std::size_t n) {
    in.read(buf, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint16_t get_u16(std::istream& in) {
    char b[2];
    if (!get_bytes(in, b, 2)) throw Error(ErrorCategory::parse, "truncated archive");
    return static_cast<std::uint16_t>(static_cast<unsigned char>(b[0]) |
                                      (static_cast<unsigned char>(b[1]) << 8));
}

std::uint32_t get_u32(std::istream& in) {
    char b[4];
    if (!get_bytes(in, b, 4)) throw Error(ErrorCategory::parse, "truncated archive");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

std::uint8_t get_u8(std::istream& in) {
    char b;
    if (!get_bytes(in, &b, 1)) throw Error(ErrorCategory::parse, "truncated archive");
    return static_cast<std::uint8_t>(b);
}

}  // namespace

void write_weights(std::ostream& out, const WeightArchive& archive) {
    out.write(WeightArchive::kMagic, 8);
    put_u32(out, archive.version);
    put_u32(out, static_cast<std::uint32_t>(archive.tensors.size()));
    for (const NamedTensor& t : archive.tensors) {
        if (t.name.size() > 0xFFFF) throw Error(ErrorCategory::config, "tensor name too long");
        check_format(t.tensor.format, true);
        put_u16(out, static_cast<std::uint16_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        out.put(static_cast<char>(t.tensor.format.total_bits));
        out.put(static_cast<char>(t.tensor.format.frac_bits));
        out.put(static_cast<char>(t.tensor.format.is_signed ? 1 : 0));
        out.put(static_cast<char>(t.tensor.dims.size()));
        for (std::int64_t d : t.tensor.dims) {
            if (d < 0 || d > 0xFFFFFFFFLL) throw Error(ErrorCategory::config, "tensor dimension out of range");
            put_u32(out, static_cast<std::uint32_t>(d));
        }
        for (RawWord w : t.tensor.data) {
            // Two's-complement truncation to 32 bits; format width guarantees recoverability.
            put_i32(out, static_cast<std::int32_t>(w));
        }
    }
    if (!out) throw Error(ErrorCategory::io, "write failed");
}

WeightArchive read_weights(std::istream& in) {
    char magic[8];
    if (!get_bytes(in, magic, 8)) throw Error(ErrorCategory::parse, "truncated archive (magic)");
    if (std::string_view(magic, 8) != std::string_view(WeightArchive::kMagic, 8)) {
        throw Error(ErrorCategory::parse, "bad magic: not a HLS4PC weight archive");
    }
    WeightArchive archive;
    archive.version = get_u32(in);
    if (archive.version != WeightArchive::kVersion) {
        throw Error(ErrorCategory::parse, "unsupported archive version " + std::to_string(archive.version));
    }
    const std::uint32_t count = get_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = get_u16(in);
        std::string name(name_len, '\0');
        if (!get_bytes(in, name.data(), name_len)) throw Error(ErrorCategory::parse, "truncated archive");
        FxpFormat fmt;
        fmt.total_bits = get_u8(in);
        fmt.frac_bits = get_u8(in);
        fmt.is_signed = get_u8(in) != 0;
        if (!fmt.storable()) {
            throw Error(ErrorCategory::parse, "tensor '" + name + "' has invalid format " + fmt.str());
        }
        const int ndim = get_u8(in);
        std::vector<std::int64_t> dims(static_cast<std::size_t>(ndim));
        for (int d = 0; d < ndim; ++d) dims[static_cast<std::size_t>(d)] = get_u32(in);
        FxpTensor tensor(fmt, dims);
        for (std::int64_t w = 0; w < tensor.size(); ++w) {
            const std::uint32_t bits = get_u32(in);
            RawWord raw = static_cast<std::int32_t>(bits);
            if (!fmt.is_signed) raw = static_cast<RawWord>(bits);
            if (raw < fmt.raw_min() || raw > fmt.raw_max()) {
                throw Error(ErrorCategory::parse, "tensor '" + name + "' word out of format range");
            }
            tensor.data[static_cast<std::size_t>(w)] = raw;
        }
        if (archive.contains(name)) {
            throw Error(ErrorCategory::parse, "duplicate tensor name '" + name + "'");
        }
        archive.tensors.push_back({std::move(name), std::move(tensor)});
    }
    return archive;
}

WeightArchive read_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path);
    return read_weights(in);
}

void write_weights_file(const std::string& path, const WeightArchive& archive) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + path + " for writing");
    write_weights(out, archive);
}

namespace {

FxpFormat parse_format(const json& j, const std::string& where) {
    FxpFormat fmt;
    if (!j.is_object() || !j.contains("total_bits") || !j.contains("frac_bits")) {
        throw Error(ErrorCategory::config, where + ": format needs total_bits and frac_bits");
    }
    fmt.total_bits = j.at("total_bits").get<int>();
    fmt.frac_bits = j.at("frac_bits").get<int>();
    fmt.is_signed = j.value("signed", true);
    if (!fmt.storable()) throw Error(ErrorCategory::config, where + ": invalid format " + fmt.str());
    return fmt;
}

LayerDataflow parse_layer_dataflow(const json& j, const std::string& where) {
    LayerDataflow df;
    df.pe = j.value("pe", 1);
    df.simd = j.value("simd", 1);
    if (j.contains("weight_format")) df.weight_format = parse_format(j.at("weight_format"), where);
    if (j.contains("act_format")) df.act_format = parse_format(j.at("act_format"), where);
    return df;
}

std::uint32_t parse_taps(const json& j) {
    if (j.is_number_unsigned() || j.is_number_integer()) return j.get<std::uint32_t>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        std::uint32_t value = 0;
        std::string_view body = s;
        int base = 10;
        if (body.starts_with("0x") || body.starts_with("0X")) {
            body.remove_prefix(2);
            base = 16;
        }
        auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value, base);
        if (ec != std::errc{} || ptr != body.data() + body.size()) {
            throw Error(ErrorCategory::config, "sampler.lfsr_taps: cannot parse '" + s + "'");
        }
        return value;
    }
    throw Error(ErrorCategory::config, "sampler.lfsr_taps must be an integer or hex string");
}

}  // namespace

ModelConfig load_model_config(std::istream& in) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCategory::parse, std::string("config JSON: ") + e.what());
    }
    try {
        ModelConfig cfg;
        ModelTopology& topo = cfg.topology;
        topo.input_points = doc.at("input_points").get<int>();
        for (const json& js : doc.at("stages")) {
            StageSpec stage;
            stage.num_samples = js.at("num_samples").get<int>();
            stage.k = js.at("k").get<int>();
            stage.pre_channels = js.at("pre_block_channels").get<std::vector<int>>();
            stage.pos_channels = js.value("pos_block_channels", std::vector<int>{});
            topo.stages.push_back(std::move(stage));
        }
        topo.classifier_channels = doc.at("classifier_channels").get<std::vector<int>>();
        if (doc.contains("sampler")) {
            const json& js = doc.at("sampler");
            const std::string type = js.value("type", "urs");
            if (type == "urs") {
                topo.sampler.type = SamplerType::urs;
            } else if (type == "fps") {
                topo.sampler.type = SamplerType::fps;
            } else {
                throw Error(ErrorCategory::config, "sampler.type must be 'urs' or 'fps'");
            }
            topo.sampler.lfsr_degree = js.value("lfsr_degree", 16);
            if (js.contains("lfsr_taps")) topo.sampler.lfsr_taps = parse_taps(js.at("lfsr_taps"));
            topo.sampler.seed = js.value("seed", 1u);
        }
        if (doc.contains("knn")) {
            const json& js = doc.at("knn");
            topo.knn.pe_count = js.value("pe_count", 4);
            if (js.contains("dist_format")) topo.knn.dist_format = parse_format(js.at("dist_format"), "knn");
        }
        topo.geometric_affine = doc.value("geometric_affine", false);
        topo.concat_anchor = doc.value("concat_anchor", true);
        topo.truncate_input = doc.value("truncate_input", true);
        if (doc.contains("num_classes") && doc.at("num_classes").get<int>() != topo.num_classes()) {
            throw Error(ErrorCategory::config, "num_classes disagrees with classifier_channels");
        }

        if (doc.contains("dataflow")) {
            const json& jd = doc.at("dataflow");
            if (jd.contains("default")) {
                cfg.dataflow.defaults = parse_layer_dataflow(jd.at("default"), "dataflow.default");
            }
            if (jd.contains("layers")) {
                for (const auto& [name, body] : jd.at("layers").items()) {
                    cfg.dataflow.per_layer[name] = parse_layer_dataflow(body, name);
                }
            }
        }

        topo.validate();
        validate_dataflow(topo, cfg.dataflow);
        return cfg;
    } catch (const json::exception& e) {
        throw Error(ErrorCategory::config, std::string("config schema: ") + e.what());
    }
}

ModelConfig load_model_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path);
    return load_model_config(in);
}

}  // namespace hls4pc
