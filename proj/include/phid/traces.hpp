#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "phid/error.hpp"

namespace phid {

/// Per-head scalar activations over time, [steps x heads] row-major.
struct TraceTensor {
    std::size_t steps = 0;
    std::size_t layers = 0;
    std::size_t heads_per_layer = 0;
    std::vector<int> layer_of_head;
    std::vector<double> values;
    std::string model_id;
    std::string task_label;
    /// First step of each prompt segment. Empty means one segment.
    std::vector<std::size_t> segment_starts;
    nlohmann::json run_config;

    static constexpr std::size_t kMinAnalysisSteps = 16;

    std::size_t heads() const noexcept { return layers * heads_per_layer; }

    double operator()(std::size_t t, std::size_t head) const { return values[t * heads() + head]; }
    double& operator()(std::size_t t, std::size_t head) { return values[t * heads() + head]; }

    std::vector<double> head_series(std::size_t head) const
    {
        std::vector<double> s(steps);
        for (std::size_t t = 0; t < steps; ++t) s[t] = (*this)(t, head);
        return s;
    }

    int head_index(std::size_t head) const noexcept
    {
        return static_cast<int>(head % heads_per_layer);
    }

    /// Uniform layout: head i lives in layer i / H.
    static std::vector<int> default_layer_of_head(std::size_t layers, std::size_t heads_per_layer)
    {
        std::vector<int> out(layers * heads_per_layer);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i / heads_per_layer);
        return out;
    }

    void validate() const
    {
        if (steps == 0) throw ValidationError("trace has zero steps");
        if (layers == 0 || heads_per_layer == 0) throw ValidationError("trace has zero layers or heads");
        if (layer_of_head.size() != heads()) {
            throw ShapeMismatchError("layer_of_head has " + std::to_string(layer_of_head.size()) +
                                     " entries, expected L*H = " + std::to_string(heads()));
        }
        std::vector<std::size_t> per_layer(layers, 0);
        for (int l : layer_of_head) {
            if (l < 0 || static_cast<std::size_t>(l) >= layers) throw ValidationError("layer_of_head out of range");
            ++per_layer[static_cast<std::size_t>(l)];
        }
        if (std::any_of(per_layer.begin(), per_layer.end(), [&](std::size_t c) { return c != heads_per_layer; })) {
            throw ValidationError("layer_of_head does not assign H heads to every layer");
        }
        if (values.size() != steps * heads()) throw ShapeMismatchError("trace values do not match T x N");
        validate_segments(segment_starts, steps);
    }

    static void validate_segments(const std::vector<std::size_t>& starts, std::size_t steps)
    {
        for (std::size_t i = 0; i < starts.size(); ++i) {
            if (starts[i] >= steps) throw ValidationError("segment start beyond trace length");
            if (i > 0 && starts[i] <= starts[i - 1]) throw ValidationError("segment starts not increasing");
        }
    }
};

/// Residual stream capture: h_0..h_L and sub-layer outputs a_l, m_l per step.
struct ResidualTrace {
    std::size_t steps = 0;
    std::size_t layers = 0;
    std::size_t d_model = 0;
    std::vector<double> h; ///< [T x (L+1) x d]
    std::vector<double> a; ///< [T x L x d]
    std::vector<double> m; ///< [T x L x d]
    std::string model_id;
    std::string task_label;
    std::vector<std::size_t> segment_starts;
    nlohmann::json run_config;

    const double* h_at(std::size_t t, std::size_t l) const { return h.data() + (t * (layers + 1) + l) * d_model; }
    const double* a_at(std::size_t t, std::size_t l) const { return a.data() + (t * layers + l) * d_model; }
    const double* m_at(std::size_t t, std::size_t l) const { return m.data() + (t * layers + l) * d_model; }

    void resize(std::size_t t, std::size_t l, std::size_t d)
    {
        steps = t;
        layers = l;
        d_model = d;
        h.assign(t * (l + 1) * d, 0.0);
        a.assign(t * l * d, 0.0);
        m.assign(t * l * d, 0.0);
    }

    void validate() const
    {
        if (steps == 0) throw ValidationError("residual trace has zero steps");
        if (layers == 0 || d_model == 0) throw ValidationError("residual trace has zero layers or width");
        if (h.size() != steps * (layers + 1) * d_model || a.size() != steps * layers * d_model ||
            m.size() != steps * layers * d_model) {
            throw ShapeMismatchError("residual tensors do not match declared dims");
        }
        TraceTensor::validate_segments(segment_starts, steps);
    }

    /// max over steps and layers of |h_{l+1} - h_l - a_l - m_l| / |h_{l+1}|.
    double max_additivity_error() const
    {
        double worst = 0.0;
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t l = 0; l < layers; ++l) {
                const double *h0 = h_at(t, l), *h1 = h_at(t, l + 1), *al = a_at(t, l), *ml = m_at(t, l);
                double num = 0.0, den = 0.0;
                for (std::size_t k = 0; k < d_model; ++k) {
                    const double r = h1[k] - h0[k] - al[k] - ml[k];
                    num += r * r;
                    den += h1[k] * h1[k];
                }
                if (den > 0.0) worst = std::max(worst, std::sqrt(num / den));
            }
        return worst;
    }
};

using AnyTrace = std::variant<TraceTensor, ResidualTrace>;

// ---------------------------------------------------------------------------
// Binary container: "PHID" | u8 version | u32le header length | UTF-8 JSON
// header | little-endian float32 payload.

inline constexpr std::uint8_t kTraceVersion = 1;
inline constexpr char kTraceMagic[4] = {'P', 'H', 'I', 'D'};

struct Container {
    nlohmann::json header;
    std::vector<float> payload;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::size_t dim(const nlohmann::json& dims, const char* key)
{
    if (!dims.contains(key) || !dims[key].is_number_unsigned()) {
        throw ParseError(std::string("header dims missing unsigned field '") + key + "'");
    }
    return dims[key].get<std::size_t>();
}

} // namespace detail

inline std::vector<std::uint8_t> encode_container(const Container& c)
{
    const std::string header = c.header.dump();
    std::vector<std::uint8_t> out;
    out.reserve(9 + header.size() + 4 * c.payload.size());
    out.insert(out.end(), std::begin(kTraceMagic), std::end(kTraceMagic));
    out.push_back(kTraceVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    for (float f : c.payload) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

/// Parses the container. `expected_floats` maps the header to the payload
/// length it declares; the payload must match it exactly.
template <class ExpectedFloats>
Container decode_container(std::span<const std::uint8_t> bytes, ExpectedFloats&& expected_floats)
{
    if (bytes.size() < 4 || !std::equal(std::begin(kTraceMagic), std::end(kTraceMagic), bytes.begin())) {
        throw BadMagicError("not a PHID file: bad magic bytes");
    }
    if (bytes.size() < 9) throw TruncatedError("PHID preamble truncated", 9, bytes.size());
    if (bytes[4] != kTraceVersion) {
        throw ParseError("unsupported PHID version " + std::to_string(bytes[4]));
    }
    const std::size_t header_len = detail::get_u32(bytes.data() + 5);
    if (bytes.size() < 9 + header_len) throw TruncatedError("PHID header truncated", 9 + header_len, bytes.size());

    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("PHID header is not valid JSON: ") + e.what());
    }
    if (!c.header.is_object()) throw ParseError("PHID header is not a JSON object");

    const std::size_t n = expected_floats(c.header);
    const std::size_t want = 9 + header_len + 4 * n;
    if (bytes.size() < want) throw TruncatedError("PHID payload truncated", want, bytes.size());
    if (bytes.size() > want) {
        throw ShapeMismatchError("PHID payload has " + std::to_string(bytes.size() - want) +
                                 " trailing bytes beyond the declared shape");
    }
    c.payload.resize(n);
    const std::uint8_t* p = bytes.data() + 9 + header_len;
    for (std::size_t i = 0; i < n; ++i) c.payload[i] = std::bit_cast<float>(detail::get_u32(p + 4 * i));
    return c;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes via a temporary sibling and rename so readers never see partial files.
inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::vector<std::uint8_t> encode_trace(const TraceTensor& t)
{
    t.validate();
    Container c;
    c.header = {{"version", kTraceVersion},
                {"kind", "head_norms"},
                {"dims", {{"T", t.steps}, {"N", t.heads()}, {"L", t.layers}, {"H", t.heads_per_layer}}},
                {"layer_of_head", t.layer_of_head},
                {"model_id", t.model_id},
                {"task_label", t.task_label},
                {"segment_starts", t.segment_starts}};
    if (!t.run_config.is_null()) c.header["run_config"] = t.run_config;
    c.payload.assign(t.values.begin(), t.values.end());
    return encode_container(c);
}

inline std::vector<std::uint8_t> encode_trace(const ResidualTrace& r)
{
    r.validate();
    Container c;
    c.header = {{"version", kTraceVersion},
                {"kind", "residual"},
                {"dims", {{"T", r.steps}, {"L", r.layers}, {"d_model", r.d_model}}},
                {"model_id", r.model_id},
                {"task_label", r.task_label},
                {"segment_starts", r.segment_starts}};
    if (!r.run_config.is_null()) c.header["run_config"] = r.run_config;
    c.payload.reserve(r.h.size() + r.a.size() + r.m.size());
    c.payload.insert(c.payload.end(), r.h.begin(), r.h.end());
    c.payload.insert(c.payload.end(), r.a.begin(), r.a.end());
    c.payload.insert(c.payload.end(), r.m.begin(), r.m.end());
    return encode_container(c);
}

inline AnyTrace decode_trace(std::span<const std::uint8_t> bytes)
{
    auto expected = [](const nlohmann::json& h) -> std::size_t {
        if (!h.contains("kind") || !h["kind"].is_string()) throw ParseError("header missing 'kind'");
        if (!h.contains("dims") || !h["dims"].is_object()) throw ParseError("header missing 'dims'");
        const auto& d = h["dims"];
        const std::string kind = h["kind"];
        if (kind == "head_norms") {
            const std::size_t t = detail::dim(d, "T"), n = detail::dim(d, "N");
            if (t == 0) throw ValidationError("trace header declares T = 0");
            if (n != detail::dim(d, "L") * detail::dim(d, "H")) throw ShapeMismatchError("header N != L * H");
            return t * n;
        }
        if (kind == "residual") {
            const std::size_t t = detail::dim(d, "T"), l = detail::dim(d, "L"), w = detail::dim(d, "d_model");
            if (t == 0) throw ValidationError("trace header declares T = 0");
            return t * (3 * l + 1) * w;
        }
        throw ParseError("unknown trace kind '" + kind + "'");
    };
    Container c = decode_container(bytes, expected);
    const auto& h = c.header;
    auto text = [&](const char* key) { return h.contains(key) ? h[key].get<std::string>() : std::string(); };
    auto starts = [&]() {
        return h.contains("segment_starts") ? h["segment_starts"].get<std::vector<std::size_t>>()
                                            : std::vector<std::size_t>{};
    };
    try {
        if (h["kind"] == "head_norms") {
            TraceTensor t;
            t.steps = h["dims"]["T"];
            t.layers = h["dims"]["L"];
            t.heads_per_layer = h["dims"]["H"];
            t.layer_of_head = h.contains("layer_of_head") ? h["layer_of_head"].get<std::vector<int>>()
                                                          : TraceTensor::default_layer_of_head(t.layers, t.heads_per_layer);
            t.values.assign(c.payload.begin(), c.payload.end());
            t.model_id = text("model_id");
            t.task_label = text("task_label");
            t.segment_starts = starts();
            if (h.contains("run_config")) t.run_config = h["run_config"];
            t.validate();
            return t;
        }
        ResidualTrace r;
        r.steps = h["dims"]["T"];
        r.layers = h["dims"]["L"];
        r.d_model = h["dims"]["d_model"];
        const std::size_t nh = r.steps * (r.layers + 1) * r.d_model, na = r.steps * r.layers * r.d_model;
        r.h.assign(c.payload.begin(), c.payload.begin() + static_cast<std::ptrdiff_t>(nh));
        r.a.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(nh),
                   c.payload.begin() + static_cast<std::ptrdiff_t>(nh + na));
        r.m.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(nh + na), c.payload.end());
        r.model_id = text("model_id");
        r.task_label = text("task_label");
        r.segment_starts = starts();
        if (h.contains("run_config")) r.run_config = h["run_config"];
        r.validate();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed trace header: ") + e.what());
    }
}

inline AnyTrace read_trace(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    try {
        return decode_trace(bytes);
    } catch (const TruncatedError& e) {
        throw TruncatedError(path.string() + ": " + e.what(), e.expected(), e.actual());
    }
}

inline TraceTensor read_head_trace(const std::filesystem::path& path)
{
    AnyTrace any = read_trace(path);
    if (auto* t = std::get_if<TraceTensor>(&any)) return std::move(*t);
    throw ValidationError(path.string() + " holds a residual trace, expected head norms");
}

inline ResidualTrace read_residual_trace(const std::filesystem::path& path)
{
    AnyTrace any = read_trace(path);
    if (auto* r = std::get_if<ResidualTrace>(&any)) return std::move(*r);
    throw ValidationError(path.string() + " holds head norms, expected a residual trace");
}

inline void write_trace(const TraceTensor& t, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_trace(t));
}

inline void write_trace(const ResidualTrace& r, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_trace(r));
}

// ---------------------------------------------------------------------------

struct StandardizedTrace {
    TraceTensor trace;
    std::vector<bool> degenerate; ///< per head: constant series, left at 0
};

/// z-scores every head series (population variance).
inline StandardizedTrace standardize(const TraceTensor& in)
{
    if (in.steps < 2) throw ValidationError("standardize needs at least 2 steps");
    StandardizedTrace out{in, std::vector<bool>(in.heads(), false)};
    const std::size_t n = in.heads();
    const double tn = static_cast<double>(in.steps);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0, lo = in(0, i), hi = in(0, i);
        for (std::size_t t = 0; t < in.steps; ++t) {
            mean += in(t, i);
            lo = std::min(lo, in(t, i));
            hi = std::max(hi, in(t, i));
        }
        mean /= tn;
        if (hi - lo <= 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)))) {
            out.degenerate[i] = true;
            for (std::size_t t = 0; t < in.steps; ++t) out.trace(t, i) = 0.0;
            continue;
        }
        double var = 0.0;
        for (std::size_t t = 0; t < in.steps; ++t) var += (in(t, i) - mean) * (in(t, i) - mean);
        const double sd = std::sqrt(var / tn);
        for (std::size_t t = 0; t < in.steps; ++t) out.trace(t, i) = (in(t, i) - mean) / sd;
    }
    return out;
}

} // namespace phid
