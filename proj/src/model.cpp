#include "memebg/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memebg/errors.hpp"

namespace memebg {

using nlohmann::json;

void ArchConfig::validate() const {
    if (input_dim == 0) throw ConfigError("architecture: input_dim must be >= 1");
    for (auto w : trunk_dims)
        if (w == 0) throw ConfigError("architecture: trunk widths must be >= 1");
    if (tasks.empty()) throw ConfigError("architecture: at least one task is required");
    std::set<std::string> names;
    for (const auto& t : tasks) {
        t.validate();
        if (!names.insert(t.name).second) throw ConfigError("architecture: duplicate task " + t.name);
    }
}

std::size_t ArchConfig::task_index(const std::string& name) const {
    for (std::size_t t = 0; t < tasks.size(); ++t)
        if (tasks[t].name == name) return t;
    throw ConfigError("architecture has no task named '" + name + "'");
}

std::size_t Parameters::count() const noexcept {
    std::size_t n = 0;
    for_each([&](const Matrix& m) { n += m.size(); });
    return n;
}

bool Parameters::all_finite() const noexcept {
    bool ok = true;
    for_each([&](const Matrix& m) { ok = ok && m.all_finite(); });
    return ok;
}

Parameters Parameters::zeros_like() const {
    Parameters z;
    for (const auto& l : trunk) z.trunk.push_back({Matrix(l.w.rows(), l.w.cols()), Matrix(1, l.b.cols())});
    for (const auto& l : heads) z.heads.push_back({Matrix(l.w.rows(), l.w.cols()), Matrix(1, l.b.cols())});
    return z;
}

MTLNetwork init_network(const ArchConfig& arch, Rng& rng) {
    arch.validate();
    MTLNetwork net{arch, {}};
    auto make = [&](std::size_t fan_in, std::size_t fan_out) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        return Dense{gauss_sample(rng, fan_in, fan_out, 0.0, stddev), Matrix(1, fan_out)};
    };
    std::size_t width = arch.input_dim;
    for (auto next : arch.trunk_dims) {
        net.params.trunk.push_back(make(width, next));
        width = next;
    }
    for (const auto& task : arch.tasks) net.params.heads.push_back(make(width, task.num_classes()));
    return net;
}

namespace {

Matrix affine(const Matrix& x, const Dense& layer) {
    Matrix z = matmul(x, layer.w);
    add_row_broadcast(z, layer.b);
    return z;
}

}  // namespace

ForwardResult forward(const MTLNetwork& net, const Matrix& x_batch) {
    if (x_batch.cols() != net.arch.input_dim)
        throw ShapeError("forward: input has shape " + x_batch.shape_string() + " but the network expects " +
                         std::to_string(net.arch.input_dim) + " columns");
    ForwardResult out;
    out.cache.input = x_batch;
    const Matrix* current = &out.cache.input;
    for (const auto& layer : net.params.trunk) {
        Matrix z = affine(*current, layer);
        Matrix a = z;
        for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
        out.cache.pre.push_back(std::move(z));
        out.cache.act.push_back(std::move(a));
        current = &out.cache.act.back();
    }
    for (const auto& head : net.params.heads) out.logits.push_back(affine(*current, head));
    return out;
}

Parameters backward(const MTLNetwork& net, const ForwardCache& cache, std::span<const Matrix> dlogits) {
    const auto& heads = net.params.heads;
    if (dlogits.size() != heads.size())
        throw ShapeError("backward: got " + std::to_string(dlogits.size()) + " dlogits for " +
                         std::to_string(heads.size()) + " heads");
    const Matrix& features = cache.trunk_output();
    const std::size_t batch = features.rows();

    Parameters grads;
    Matrix dfeatures(batch, features.cols());
    for (std::size_t t = 0; t < heads.size(); ++t) {
        const Matrix& g = dlogits[t];
        if (g.rows() != batch || g.cols() != heads[t].w.cols())
            throw ShapeError("backward: dlogits for task " + net.arch.tasks[t].name + " has shape " +
                             g.shape_string() + ", expected " + std::to_string(batch) + "x" +
                             std::to_string(heads[t].w.cols()));
        grads.heads.push_back({matmul_at_b(features, g), column_sums(g)});
        const Matrix contribution = matmul_a_bt(g, heads[t].w);
        auto acc = dfeatures.data();
        auto src = contribution.data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
    }

    grads.trunk.resize(net.params.trunk.size());
    Matrix upstream = std::move(dfeatures);
    for (std::size_t l = net.params.trunk.size(); l-- > 0;) {
        const Matrix& pre = cache.pre[l];
        require_same_shape(upstream, pre, "backward");
        Matrix dz = std::move(upstream);
        for (std::size_t i = 0; i < dz.size(); ++i)
            if (!(pre.data()[i] > 0.0)) dz.data()[i] = 0.0;
        const Matrix& layer_input = l == 0 ? cache.input : cache.act[l - 1];
        grads.trunk[l] = {matmul_at_b(layer_input, dz), column_sums(dz)};
        if (l > 0) upstream = matmul_a_bt(dz, net.params.trunk[l].w);
    }
    return grads;
}

std::vector<int> argmax_rows(const Matrix& logits) {
    std::vector<int> out(logits.rows(), 0);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto r = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < r.size(); ++c)
            if (r[c] > r[best]) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<std::vector<int>> predict(const MTLNetwork& net, const Matrix& x_batch) {
    const auto result = forward(net, x_batch);
    std::vector<std::vector<int>> out;
    for (const auto& logits : result.logits) out.push_back(argmax_rows(logits));
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kFormatVersion = 1;

json matrix_rows(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
    return rows;
}

json dense_to_json(const Dense& d) {
    return {{"w", matrix_rows(d.w)}, {"b", std::vector<double>(d.b.data().begin(), d.b.data().end())}};
}

Dense dense_from_json(const json& j, std::size_t fan_in, std::size_t fan_out, const std::string& where) {
    if (!j.is_object() || !j.contains("w") || !j.contains("b"))
        throw FormatError("checkpoint: " + where + " needs w and b");
    const auto& w = j.at("w");
    const auto& b = j.at("b");
    if (!w.is_array() || w.size() != fan_in)
        throw FormatError("checkpoint: " + where + ".w must have " + std::to_string(fan_in) + " rows");
    if (!b.is_array() || b.size() != fan_out)
        throw FormatError("checkpoint: " + where + ".b must have " + std::to_string(fan_out) + " entries");
    Dense d{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    auto number = [&](const json& v) {
        if (!v.is_number()) throw FormatError("checkpoint: non-numeric parameter in " + where);
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw FormatError("checkpoint: non-finite parameter in " + where);
        return x;
    };
    for (std::size_t i = 0; i < fan_in; ++i) {
        const auto& row = w[i];
        if (!row.is_array() || row.size() != fan_out)
            throw FormatError("checkpoint: " + where + ".w row " + std::to_string(i) + " must have " +
                              std::to_string(fan_out) + " entries");
        for (std::size_t c = 0; c < fan_out; ++c) d.w(i, c) = number(row[c]);
    }
    for (std::size_t c = 0; c < fan_out; ++c) d.b(0, c) = number(b[c]);
    return d;
}

}  // namespace

std::string network_to_json(const MTLNetwork& net) {
    json tasks = json::array();
    for (const auto& t : net.arch.tasks) tasks.push_back({{"name", t.name}, {"classes", t.classes}});
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["arch"] = {{"input_dim", net.arch.input_dim},
                   {"trunk_dims", net.arch.trunk_dims},
                   {"activation", "relu"},
                   {"tasks", tasks}};
    json trunk = json::array();
    for (const auto& l : net.params.trunk) trunk.push_back(dense_to_json(l));
    doc["trunk"] = std::move(trunk);
    json heads = json::object();
    for (std::size_t t = 0; t < net.arch.tasks.size(); ++t)
        heads[net.arch.tasks[t].name] = dense_to_json(net.params.heads[t]);
    doc["heads"] = std::move(heads);
    return doc.dump(1) + "\n";
}

MTLNetwork network_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format_version"))
            throw FormatError("checkpoint: missing format_version");
        if (doc.at("format_version") != kFormatVersion)
            throw FormatError("checkpoint: unsupported format_version " + doc.at("format_version").dump());

        const auto& a = doc.at("arch");
        MTLNetwork net;
        net.arch.input_dim = a.at("input_dim").get<std::size_t>();
        net.arch.trunk_dims = a.at("trunk_dims").get<std::vector<std::size_t>>();
        if (a.contains("activation") && a.at("activation") != "relu")
            throw FormatError("checkpoint: unsupported activation " + a.at("activation").dump());
        for (const auto& t : a.at("tasks"))
            net.arch.tasks.push_back({t.at("name").get<std::string>(), t.at("classes").get<std::vector<std::string>>()});
        try {
            net.arch.validate();
        } catch (const Error& e) {
            throw FormatError(std::string("checkpoint: invalid arch: ") + e.what());
        }

        const auto& trunk = doc.at("trunk");
        if (!trunk.is_array() || trunk.size() != net.arch.trunk_dims.size())
            throw FormatError("checkpoint: trunk layer count does not match arch");
        std::size_t width = net.arch.input_dim;
        for (std::size_t l = 0; l < trunk.size(); ++l) {
            net.params.trunk.push_back(
                dense_from_json(trunk[l], width, net.arch.trunk_dims[l], "trunk[" + std::to_string(l) + "]"));
            width = net.arch.trunk_dims[l];
        }
        const auto& heads = doc.at("heads");
        if (!heads.is_object() || heads.size() != net.arch.tasks.size())
            throw FormatError("checkpoint: heads do not match arch tasks");
        for (const auto& task : net.arch.tasks) {
            if (!heads.contains(task.name)) throw FormatError("checkpoint: missing head for task " + task.name);
            net.params.heads.push_back(
                dense_from_json(heads.at(task.name), width, task.num_classes(), "heads." + task.name));
        }
        return net;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

void save_network(const MTLNetwork& net, const std::filesystem::path& path) {
    const std::string text = network_to_json(net);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot write checkpoint " + path.string());
    out << text;
    if (!out) throw ArgumentError("write failed for checkpoint " + path.string());
}

MTLNetwork load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return network_from_json(buf.str());
}

}  // namespace memebg
