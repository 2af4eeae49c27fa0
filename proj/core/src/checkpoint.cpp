#include "dcbilstm/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dcbilstm/errors.hpp"

namespace dcbilstm {

namespace {

constexpr const char* kMagic = "DCBILSTM v1";
constexpr const char* kGateOrder = "i,f,o,g";

std::string format_double(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string concat_order(const ModelConfig& cfg) {
    std::string s = "h0";
    for (std::size_t l = 1; l <= cfg.dl; ++l) s += ",h" + std::to_string(l);
    return s;
}

void write_le_doubles(std::ostream& out, std::span<const double> values) {
    std::string bytes(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

class ManifestReader {
public:
    explicit ManifestReader(std::istream& in) : in_(in) {}

    std::string line() {
        std::string s;
        if (!std::getline(in_, s)) throw ParseError("checkpoint: unexpected end of file", line_no_ + 1);
        ++line_no_;
        return s;
    }

    /// Reads `key value` and returns value.
    std::string field(const std::string& key) {
        std::string s = line();
        if (s.rfind(key + " ", 0) != 0) {
            throw ParseError("checkpoint: expected field '" + key + "', got '" + s + "'", line_no_);
        }
        return s.substr(key.size() + 1);
    }

    std::uint64_t uint_field(const std::string& key) { return to_uint(field(key), key); }

    double double_field(const std::string& key) {
        const std::string v = field(key);
        char* end = nullptr;
        const double d = std::strtod(v.c_str(), &end);
        if (v.empty() || *end != '\0') fail("checkpoint: bad real for '" + key + "'");
        return d;
    }

    std::uint64_t to_uint(const std::string& v, const std::string& key) {
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
            fail("checkpoint: bad integer for '" + key + "': '" + v + "'");
        }
        return std::stoull(v);
    }

    [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, line_no_); }

    std::istream& stream() { return in_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

} // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    const ModelConfig& c = ckpt.model.config;
    std::ostringstream head;
    head << kMagic << '\n'
         << "arch " << to_string(c.arch) << '\n'
         << "m " << c.m << '\n'
         << "dl " << c.dl << '\n'
         << "dh " << c.dh << '\n'
         << "th " << c.th << '\n'
         << "num_classes " << c.num_classes << '\n'
         << "dropout_embed " << format_double(c.dropout_embed) << '\n'
         << "dropout_pool " << format_double(c.dropout_pool) << '\n'
         << "max_norm_s " << (c.max_norm_s ? format_double(*c.max_norm_s) : "none") << '\n'
         << "forget_bias " << format_double(c.forget_bias) << '\n'
         << "fine_tune_embeddings " << (c.fine_tune_embeddings ? 1 : 0) << '\n'
         << "gate_order " << kGateOrder << '\n'
         << "concat_order " << concat_order(c) << '\n'
         << "seed " << ckpt.seed << '\n'
         << "vocab " << ckpt.vocab.size() << '\n';
    for (const std::string& tok : ckpt.vocab) {
        if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos) {
            throw FormatError("checkpoint: vocabulary token contains whitespace: '" + tok + "'");
        }
        head << tok << '\n';
    }
    std::size_t count = 0;
    visit_parameters(ckpt.model, [&](const std::string&, const Tensor&) { ++count; });
    head << "tensors " << count << '\n';
    const std::string h = head.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    visit_parameters(ckpt.model, [&](const std::string& name, const Tensor& t) {
        const std::string line = name + " " + std::to_string(t.rows()) + " " +
                                 std::to_string(t.cols()) + "\n";
        out.write(line.data(), static_cast<std::streamsize>(line.size()));
        write_le_doubles(out, t.data());
    });
    if (!out) throw Error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
    ManifestReader r(in);
    if (r.line() != kMagic) r.fail("checkpoint: missing 'DCBILSTM v1' header");

    Checkpoint ckpt;
    ModelConfig& c = ckpt.model.config;
    try {
        c.arch = parse_arch(r.field("arch"));
    } catch (const ConfigError& e) {
        r.fail(std::string("checkpoint: ") + e.what());
    }
    c.m = r.uint_field("m");
    c.dl = r.uint_field("dl");
    c.dh = r.uint_field("dh");
    c.th = r.uint_field("th");
    c.num_classes = r.uint_field("num_classes");
    c.dropout_embed = r.double_field("dropout_embed");
    c.dropout_pool = r.double_field("dropout_pool");
    {
        const std::string v = r.field("max_norm_s");
        if (v == "none") {
            c.max_norm_s.reset();
        } else {
            char* end = nullptr;
            c.max_norm_s = std::strtod(v.c_str(), &end);
            if (*end != '\0') r.fail("checkpoint: bad max_norm_s");
        }
    }
    c.forget_bias = r.double_field("forget_bias");
    c.fine_tune_embeddings = r.uint_field("fine_tune_embeddings") != 0;
    if (r.field("gate_order") != kGateOrder) r.fail("checkpoint: unsupported gate order");
    if (r.field("concat_order") != concat_order(c)) r.fail("checkpoint: unsupported concat order");
    ckpt.seed = r.uint_field("seed");

    const std::uint64_t vocab_size = r.uint_field("vocab");
    ckpt.vocab.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) ckpt.vocab.push_back(r.line());

    try {
        c.validate();
    } catch (const ConfigError& e) {
        r.fail(std::string("checkpoint: ") + e.what());
    }

    // Build the expected layout, then fill it tensor by tensor.
    Model& model = ckpt.model;
    model.embeddings = Tensor(vocab_size, c.m);
    for (std::size_t l = 1; l <= c.dl; ++l) {
        const std::size_t in = layer_input_dim(c, l);
        model.dense_layers.push_back({LstmParams::zeros(in, c.dh), LstmParams::zeros(in, c.dh)});
    }
    const std::size_t top_in = top_input_dim(c);
    model.top_layer = {LstmParams::zeros(top_in, c.th), LstmParams::zeros(top_in, c.th)};
    model.softmax_W = Tensor(2 * c.th, c.num_classes);
    model.softmax_b = Tensor(1, c.num_classes);

    std::size_t expected = 0;
    visit_parameters(model, [&](const std::string&, const Tensor&) { ++expected; });
    if (r.uint_field("tensors") != expected) r.fail("checkpoint: unexpected tensor count");

    std::string bytes;
    visit_parameters(model, [&](const std::string& name, Tensor& t) {
        std::istringstream hdr(r.line());
        std::string got_name;
        std::size_t rows = 0, cols = 0;
        if (!(hdr >> got_name >> rows >> cols) || got_name != name || rows != t.rows() ||
            cols != t.cols()) {
            r.fail("checkpoint: expected tensor " + name + " " + t.shape_string());
        }
        bytes.resize(t.size() * 8);
        in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
            r.fail("checkpoint: truncated data for tensor " + name);
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint64_t u = 0;
            for (int b = 0; b < 8; ++b) {
                u |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
            }
            t[i] = std::bit_cast<double>(u);
        }
    });
    if (in.peek() != std::char_traits<char>::eof()) r.fail("checkpoint: trailing data");
    model.validate();
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
    write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path.string());
    return read_checkpoint(in);
}

} // namespace dcbilstm
