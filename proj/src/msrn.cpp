#include "gs/msrn.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace gs::msrn {

void MSRNModel::validate() const {
    if (scale_factor < 1)
        throw InvalidParameterError("msrn: scale factor must be >= 1");
    if (feature_width < 1)
        throw InvalidParameterError("msrn: feature width must be >= 1");
    const int w = feature_width;
    auto expect = [](bool ok, const char* what) {
        if (!ok)
            throw InvalidParameterError(std::string("msrn: bad shape for ") + what);
    };
    expect(head.out_channels == w && head.in_channels == 3 && head.kernel == 3, "head");
    expect(static_cast<int>(blocks.size()) == n_blocks, "block count");
    for (const auto& b : blocks) {
        expect(b.conv3_a.out_channels == w && b.conv3_a.in_channels == w &&
                   b.conv3_a.kernel == 3,
               "msrb conv3_a");
        expect(b.conv5_a.out_channels == w && b.conv5_a.in_channels == w &&
                   b.conv5_a.kernel == 5,
               "msrb conv5_a");
        expect(b.conv3_b.out_channels == 2 * w && b.conv3_b.in_channels == 2 * w &&
                   b.conv3_b.kernel == 3,
               "msrb conv3_b");
        expect(b.conv5_b.out_channels == 2 * w && b.conv5_b.in_channels == 2 * w &&
                   b.conv5_b.kernel == 5,
               "msrb conv5_b");
        expect(b.fuse.out_channels == w && b.fuse.in_channels == 4 * w && b.fuse.kernel == 1,
               "msrb fuse");
    }
    expect(hffs.out_channels == w && hffs.in_channels == (n_blocks + 1) * w &&
               hffs.kernel == 1,
           "hffs");
    const int up = scale_factor * scale_factor * 3;
    expect(tail_up.out_channels == up && tail_up.in_channels == w && tail_up.kernel == 3,
           "tail_up");
    if (tail_up.out_channels % (scale_factor * scale_factor) != 0)
        throw InvalidParameterError("msrn: tail channels not divisible by r^2");
    expect(tail_out.out_channels == 3 && tail_out.in_channels == 3 && tail_out.kernel == 3,
           "tail_out");
}

Tensor3 conv2d(const Tensor3& x, const ConvLayer& layer) {
    if (x.channels != layer.in_channels)
        throw InvalidParameterError("conv2d: channel mismatch");
    const int pad = (layer.kernel - 1) / 2;
    Tensor3 out(layer.out_channels, x.height, x.width);
    for (int oc = 0; oc < layer.out_channels; ++oc) {
        for (int y = 0; y < x.height; ++y) {
            for (int xx = 0; xx < x.width; ++xx) {
                float acc = layer.bias[oc];
                for (int ic = 0; ic < layer.in_channels; ++ic) {
                    for (int ky = 0; ky < layer.kernel; ++ky) {
                        const int sy = y + ky - pad;
                        if (sy < 0 || sy >= x.height)
                            continue;
                        for (int kx = 0; kx < layer.kernel; ++kx) {
                            const int sx = xx + kx - pad;
                            if (sx < 0 || sx >= x.width)
                                continue;
                            acc += layer.weight(oc, ic, ky, kx) * x.at(ic, sy, sx);
                        }
                    }
                }
                out.at(oc, y, xx) = acc;
            }
        }
    }
    return out;
}

Tensor3 relu(const Tensor3& x) {
    Tensor3 out = x;
    for (float& v : out.data)
        v = std::max(0.0f, v);
    return out;
}

namespace {

Tensor3 concat_channels(const Tensor3& a, const Tensor3& b) {
    if (a.height != b.height || a.width != b.width)
        throw InvalidParameterError("concat: spatial size mismatch");
    Tensor3 out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

} // namespace

Tensor3 msrb_forward(const Tensor3& input, const MsrbWeights& block) {
    if (input.channels != block.conv3_a.in_channels)
        throw InvalidParameterError("msrb: channel mismatch");
    const Tensor3 s3 = relu(conv2d(input, block.conv3_a));
    const Tensor3 s5 = relu(conv2d(input, block.conv5_a));
    const Tensor3 stage1 = concat_channels(s3, s5);
    const Tensor3 p3 = relu(conv2d(stage1, block.conv3_b));
    const Tensor3 p5 = relu(conv2d(stage1, block.conv5_b));
    const Tensor3 stage2 = concat_channels(p3, p5);
    Tensor3 s = conv2d(stage2, block.fuse);
    for (size_t i = 0; i < s.data.size(); ++i)
        s.data[i] += input.data[i]; // local residual: M_k = S + M_{k-1}
    return s;
}

Tensor3 hffs(const std::vector<Tensor3>& features, const ConvLayer& layer) {
    if (features.empty())
        throw InvalidParameterError("hffs: no feature maps");
    Tensor3 cat = features[0];
    for (size_t i = 1; i < features.size(); ++i)
        cat = concat_channels(cat, features[i]);
    if (cat.channels != layer.in_channels)
        throw InvalidParameterError("hffs: concatenated channel mismatch");
    return conv2d(cat, layer);
}

Tensor3 pixel_shuffle(const Tensor3& x, int r) {
    if (r < 1)
        throw InvalidParameterError("pixel_shuffle: r must be >= 1");
    if (x.channels % (r * r) != 0)
        throw InvalidParameterError("pixel_shuffle: channels not divisible by r^2");
    Tensor3 out(x.channels / (r * r), x.height * r, x.width * r);
    for (int c = 0; c < out.channels; ++c)
        for (int i = 0; i < out.height; ++i)
            for (int j = 0; j < out.width; ++j)
                out.at(c, i, j) = x.at(c * r * r + (i % r) * r + (j % r), i / r, j / r);
    return out;
}

ImageF msrn_forward(const ImageF& low_res, const MSRNModel& model) {
    if (low_res.channels != 3)
        throw InvalidParameterError("msrn_forward: expected a 3-channel image");
    model.validate();

    Tensor3 input(3, low_res.height, low_res.width);
    for (int y = 0; y < low_res.height; ++y)
        for (int x = 0; x < low_res.width; ++x)
            for (int c = 0; c < 3; ++c)
                input.at(c, y, x) = static_cast<float>(low_res.at(y, x, c));

    // No interpolation before the head conv; the network upsamples at the end.
    std::vector<Tensor3> features;
    features.reserve(model.n_blocks + 1);
    features.push_back(conv2d(input, model.head)); // M_0
    for (const auto& block : model.blocks)
        features.push_back(msrb_forward(features.back(), block));

    const Tensor3 fused = hffs(features, model.hffs);
    const Tensor3 up = conv2d(fused, model.tail_up);
    const Tensor3 shuffled = pixel_shuffle(up, model.scale_factor);
    const Tensor3 out = conv2d(shuffled, model.tail_out);

    ImageF result(out.height, out.width, 3);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < 3; ++c)
                result.at(y, x, c) =
                    std::clamp(static_cast<double>(out.at(c, y, x)), 0.0, 1.0);
    return result;
}

// ---------------------------------------------------------------------------
// Weight file I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'M', 'S', 'R', 'N', 'W', '1'};
constexpr uint32_t kVersion = 1;

struct ByteWriter {
    std::vector<uint8_t> bytes;

    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i)
            bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
};

struct ByteReader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > bytes.size())
            throw IoError("weight file truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

void write_tensor(ByteWriter& w, const std::string& name, const std::vector<uint32_t>& dims,
                  const std::vector<float>& data) {
    w.u32(static_cast<uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<uint32_t>(dims.size()));
    size_t total = 1;
    for (uint32_t d : dims) {
        w.u32(d);
        total *= d;
    }
    if (total != data.size())
        throw InvalidParameterError("weight file: tensor size mismatch on write");
    for (float v : data)
        w.f32(v);
}

std::vector<float> read_tensor(ByteReader& r, const std::string& expected_name,
                               const std::vector<uint32_t>& expected_dims) {
    const uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    if (name != expected_name)
        throw IoError("weight file: expected tensor '" + expected_name + "', found '" +
                      name + "'");
    const uint32_t rank = r.u32();
    if (rank != expected_dims.size())
        throw IoError("weight file: rank mismatch for " + expected_name);
    size_t total = 1;
    for (uint32_t expected : expected_dims) {
        const uint32_t d = r.u32();
        if (d != expected)
            throw IoError("weight file: shape mismatch for " + expected_name);
        total *= d;
    }
    std::vector<float> data(total);
    for (size_t i = 0; i < total; ++i)
        data[i] = r.f32();
    return data;
}

void conv_dims(const ConvLayer& c, std::vector<uint32_t>& wdims, std::vector<uint32_t>& bdims) {
    wdims = {static_cast<uint32_t>(c.out_channels), static_cast<uint32_t>(c.in_channels),
             static_cast<uint32_t>(c.kernel), static_cast<uint32_t>(c.kernel)};
    bdims = {static_cast<uint32_t>(c.out_channels)};
}

void write_conv(ByteWriter& w, const std::string& prefix, const ConvLayer& c) {
    std::vector<uint32_t> wd, bd;
    conv_dims(c, wd, bd);
    write_tensor(w, prefix + ".weight", wd, c.weights);
    write_tensor(w, prefix + ".bias", bd, c.bias);
}

ConvLayer read_conv(ByteReader& r, const std::string& prefix, int out_c, int in_c, int k) {
    ConvLayer c(out_c, in_c, k);
    std::vector<uint32_t> wd, bd;
    conv_dims(c, wd, bd);
    c.weights = read_tensor(r, prefix + ".weight", wd);
    c.bias = read_tensor(r, prefix + ".bias", bd);
    return c;
}

} // namespace

void save_weights(const MSRNModel& model, const std::string& path) {
    model.validate();
    ByteWriter w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(model.scale_factor));
    w.u32(static_cast<uint32_t>(model.n_blocks));
    w.u32(static_cast<uint32_t>(model.feature_width));

    write_conv(w, "head", model.head);
    for (int i = 0; i < model.n_blocks; ++i) {
        const std::string p = "msrb" + std::to_string(i);
        write_conv(w, p + ".conv3_a", model.blocks[i].conv3_a);
        write_conv(w, p + ".conv5_a", model.blocks[i].conv5_a);
        write_conv(w, p + ".conv3_b", model.blocks[i].conv3_b);
        write_conv(w, p + ".conv5_b", model.blocks[i].conv5_b);
        write_conv(w, p + ".fuse", model.blocks[i].fuse);
    }
    write_conv(w, "hffs", model.hffs);
    write_conv(w, "tail.up", model.tail_up);
    write_conv(w, "tail.out", model.tail_out);

    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0L, w.bytes.data(), static_cast<uInt>(w.bytes.size())));
    w.u32(crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open weight file for writing: " + path);
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out)
        throw IoError("failed writing weight file: " + path);
}

MSRNModel load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open weight file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());

    if (bytes.size() < sizeof(kMagic) + 4 * 4 + 4)
        throw IoError("weight file truncated");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("weight file: magic mismatch");

    const size_t body_len = bytes.size() - 4;
    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(bytes[body_len + i]) << (8 * i);
    const uint32_t actual_crc =
        static_cast<uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(body_len)));
    if (stored_crc != actual_crc)
        throw IoError("weight file: CRC mismatch");

    ByteReader r{bytes};
    r.pos = sizeof(kMagic);
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("weight file: unsupported version");
    MSRNModel m;
    m.scale_factor = static_cast<int>(r.u32());
    m.n_blocks = static_cast<int>(r.u32());
    m.feature_width = static_cast<int>(r.u32());
    if (m.scale_factor < 1 || m.n_blocks < 0 || m.feature_width < 1 ||
        m.n_blocks > 1024 || m.feature_width > 65536)
        throw IoError("weight file: implausible header");

    const int w = m.feature_width;
    m.head = read_conv(r, "head", w, 3, 3);
    m.blocks.resize(m.n_blocks);
    for (int i = 0; i < m.n_blocks; ++i) {
        const std::string p = "msrb" + std::to_string(i);
        m.blocks[i].conv3_a = read_conv(r, p + ".conv3_a", w, w, 3);
        m.blocks[i].conv5_a = read_conv(r, p + ".conv5_a", w, w, 5);
        m.blocks[i].conv3_b = read_conv(r, p + ".conv3_b", 2 * w, 2 * w, 3);
        m.blocks[i].conv5_b = read_conv(r, p + ".conv5_b", 2 * w, 2 * w, 5);
        m.blocks[i].fuse = read_conv(r, p + ".fuse", w, 4 * w, 1);
    }
    m.hffs = read_conv(r, "hffs", w, (m.n_blocks + 1) * w, 1);
    m.tail_up = read_conv(r, "tail.up", m.scale_factor * m.scale_factor * 3, w, 3);
    m.tail_out = read_conv(r, "tail.out", 3, 3, 3);

    if (r.pos != body_len)
        throw IoError("weight file: trailing bytes after tensors");
    m.validate();
    return m;
}

MSRNModel make_fixture_model(uint64_t seed, int scale_factor, int n_blocks,
                             int feature_width) {
    Rng rng(seed);
    auto fill = [&rng](ConvLayer& c) {
        const double scale =
            1.0 / std::sqrt(static_cast<double>(c.in_channels) * c.kernel * c.kernel);
        for (float& v : c.weights)
            v = static_cast<float>(rng.normal() * scale);
        for (float& v : c.bias)
            v = static_cast<float>(rng.normal() * 0.01);
    };

    MSRNModel m;
    m.scale_factor = scale_factor;
    m.n_blocks = n_blocks;
    m.feature_width = feature_width;
    const int w = feature_width;
    m.head = ConvLayer(w, 3, 3);
    fill(m.head);
    m.blocks.resize(n_blocks);
    for (auto& b : m.blocks) {
        b.conv3_a = ConvLayer(w, w, 3);
        b.conv5_a = ConvLayer(w, w, 5);
        b.conv3_b = ConvLayer(2 * w, 2 * w, 3);
        b.conv5_b = ConvLayer(2 * w, 2 * w, 5);
        b.fuse = ConvLayer(w, 4 * w, 1);
        fill(b.conv3_a);
        fill(b.conv5_a);
        fill(b.conv3_b);
        fill(b.conv5_b);
        fill(b.fuse);
    }
    m.hffs = ConvLayer(w, (n_blocks + 1) * w, 1);
    fill(m.hffs);
    m.tail_up = ConvLayer(scale_factor * scale_factor * 3, w, 3);
    fill(m.tail_up);
    m.tail_out = ConvLayer(3, 3, 3);
    fill(m.tail_out);
    return m;
}

} // namespace gs::msrn
