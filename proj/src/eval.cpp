#include "dstyle/eval.hpp"

#include "dstyle/errors.hpp"
#include "dstyle/parallel.hpp"

#include <fmt/format.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace dstyle {

EmbeddingVector::EmbeddingVector(std::vector<double> values, EmbeddingSource source)
    : values_(std::move(values)), source_(source) {
    double sq = 0.0;
    for (double v : values_) {
        if (!std::isfinite(v)) {
            throw ConfigError("embedding contains non-finite values");
        }
        sq += v * v;
    }
    if (values_.empty() || sq == 0.0) {
        throw ConfigError("embedding is empty or zero");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : values_) {
        v *= inv;
    }
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError(fmt::format("embedding dimensions differ: {} vs {}", a.dim(), b.dim()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a.values()[i] * b.values()[i];
    }
    return std::clamp(dot, -1.0, 1.0);
}

void RetrievalSet::validate() const {
    if (true_prompt.empty()) {
        throw ConfigError("prompt: must not be empty");
    }
    if (distractors.empty()) {
        throw ConfigError("distractor_file: no distractor prompts");
    }
    if (std::find(distractors.begin(), distractors.end(), true_prompt) != distractors.end()) {
        throw ConfigError("distractor_file: contains the true prompt");
    }
}

RetrievalSet load_retrieval_set(const std::string& true_prompt, const std::filesystem::path& distractor_file) {
    std::ifstream in(distractor_file);
    if (!in) {
        throw ConfigError(fmt::format("distractor_file: cannot open {}", distractor_file.string()));
    }
    RetrievalSet set{true_prompt, {}};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        set.distractors.push_back(line);
    }
    set.validate();
    return set;
}

double r_precision(const std::vector<EmbeddingVector>& views, const RetrievalSet& set,
                   const std::map<std::string, EmbeddingVector>& text_embeddings) {
    if (views.empty()) {
        throw ConfigError("r_precision: no views");
    }
    auto lookup = [&](const std::string& prompt) -> const EmbeddingVector& {
        const auto it = text_embeddings.find(prompt);
        if (it == text_embeddings.end()) {
            throw ConfigError(fmt::format("r_precision: no embedding for prompt '{}'", prompt));
        }
        return it->second;
    };
    const EmbeddingVector& truth = lookup(set.true_prompt);
    std::vector<const EmbeddingVector*> others;
    others.reserve(set.distractors.size());
    for (const auto& d : set.distractors) {
        others.push_back(&lookup(d));
    }
    int correct = 0;
    for (const auto& view : views) {
        const double score = cosine(view, truth);
        const bool beaten =
            std::any_of(others.begin(), others.end(), [&](const EmbeddingVector* e) { return cosine(view, *e) >= score; });
        correct += beaten ? 0 : 1;
    }
    return static_cast<double>(correct) / static_cast<double>(views.size());
}

RemoteEmbeddingClient::RemoteEmbeddingClient(std::string endpoint, RetryPolicy policy)
    : client_(std::move(endpoint), policy) {}

EmbeddingVector RemoteEmbeddingClient::parse(const nlohmann::json& j, EmbeddingSource source) const {
    std::vector<double> values;
    try {
        values = j.at("embedding").get<std::vector<double>>();
        if (j.contains("dim") && j.at("dim").get<std::size_t>() != values.size()) {
            throw BackendError(fmt::format("/v1/embed: dim {} but {} values", j.at("dim").get<std::size_t>(),
                                           values.size()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(fmt::format("/v1/embed: malformed response ({})", e.what()));
    }
    try {
        return EmbeddingVector(std::move(values), source);
    } catch (const ConfigError& e) {
        throw BackendError(fmt::format("/v1/embed: {}", e.what()));
    }
}

EmbeddingVector RemoteEmbeddingClient::embed_text(const std::string& text) {
    return parse(client_.post("/v1/embed", {{"kind", "text"}, {"text", text}}), EmbeddingSource::Text);
}

EmbeddingVector RemoteEmbeddingClient::embed_image(std::span<const float> rgb, int width, int height) {
    const nlohmann::json body = {
        {"kind", "image"}, {"image_b64", encode_floats(rgb)}, {"width", width}, {"height", height}};
    return parse(client_.post("/v1/embed", body), EmbeddingSource::Image);
}

RemoteLpipsClient::RemoteLpipsClient(std::string endpoint, std::string net, RetryPolicy policy)
    : client_(std::move(endpoint), policy), net_(std::move(net)) {
    if (net_ != "alex" && net_ != "vgg") {
        throw ConfigError(fmt::format("lpips_net: '{}' is not alex or vgg", net_));
    }
}

double RemoteLpipsClient::distance(std::span<const float> a, std::span<const float> b, int width, int height) {
    const nlohmann::json body = {{"image_a_b64", encode_floats(a)},
                                 {"image_b_b64", encode_floats(b)},
                                 {"width", width},
                                 {"height", height},
                                 {"net", net_}};
    const nlohmann::json j = client_.post("/v1/lpips", body);
    try {
        const double v = j.at("value").get<double>();
        if (!std::isfinite(v)) {
            throw BackendError("/v1/lpips: non-finite value");
        }
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(fmt::format("/v1/lpips: malformed response ({})", e.what()));
    }
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(bytes.data(), bytes.size(), digest);
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char c : digest) {
        out += fmt::format("{:02x}", c);
    }
    return out;
}

namespace {

std::vector<double> hash_vector(std::span<const std::uint8_t> bytes, int dim) {
    const std::string hex = content_hash(bytes);
    const std::uint64_t seed = std::stoull(hex.substr(0, 16), nullptr, 16);
    Pcg32 rng(seed);
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) {
        x = rng.normal();
    }
    return v;
}

std::span<const std::uint8_t> as_bytes(std::span<const float> values) {
    return {reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()};
}

} // namespace

EmbeddingVector HashEmbeddingClient::embed_text(const std::string& text) {
    ++text_calls_;
    return {hash_vector({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}, dim_),
            EmbeddingSource::Text};
}

EmbeddingVector HashEmbeddingClient::embed_image(std::span<const float> rgb, int, int) {
    ++image_calls_;
    return {hash_vector(as_bytes(rgb), dim_), EmbeddingSource::Image};
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = {{"r_precision", r_precision},
                        {"image_text_score", image_text_score},
                        {"image_image_score", nullptr},
                        {"lpips", nullptr},
                        {"views", views},
                        {"candidates", candidates},
                        {"image_embed_calls", image_embed_calls},
                        {"text_embed_calls", text_embed_calls},
                        {"embedding_info", embedding_info}};
    if (image_image_score) {
        j["image_image_score"] = *image_image_score;
    }
    if (lpips) {
        j["lpips"] = *lpips;
    }
    return j;
}

std::string view_file_name(int index) { return fmt::format("view_{:03d}.png", index); }

std::vector<Image8> render_eval_views(const Mesh& mesh, const AppearanceFields<float>& fields,
                                      const EvalOptions& opts) {
    if (opts.views < 1) {
        throw ConfigError("eval.views: must be >= 1");
    }
    Camera tmpl;
    tmpl.width = opts.resolution;
    tmpl.height = opts.resolution;
    tmpl.fov_y_deg = opts.fov_y_deg;
    const Bvh bvh = build_bvh(mesh);
    std::vector<Image8> out;
    for (const Camera& cam : uniform_eval_views(opts.views, tmpl)) {
        const auto rendered = render_view(mesh, bvh, fields, cam, opts.shading);
        out.push_back(quantize_rgb(rendered.view.image, cam.width, cam.height));
    }
    return out;
}

MetricReport evaluate(const Mesh& mesh, const AppearanceFields<float>& fields, const RetrievalSet& set,
                      EmbeddingClient& embedder, LpipsClient* lpips, const EvalOptions& opts) {
    set.validate();
    if (opts.lpips && lpips == nullptr) {
        throw ConfigError("eval.lpips: requested without an LPIPS endpoint");
    }
    if (opts.lpips && !opts.ground_truth_dir) {
        throw ConfigError("eval.lpips: requires eval.ground_truth_dir");
    }
    // Load ground truth before rendering so a bad directory fails fast.
    std::vector<Image8> truth;
    if (opts.ground_truth_dir) {
        if (!std::filesystem::is_directory(*opts.ground_truth_dir)) {
            throw ConfigError(
                fmt::format("eval.ground_truth_dir: {} is not a directory", opts.ground_truth_dir->string()));
        }
        for (int i = 0; i < opts.views; ++i) {
            Image8 img = read_png(*opts.ground_truth_dir / view_file_name(i));
            if (img.width != opts.resolution || img.height != opts.resolution || img.channels != 3) {
                throw ShapeError(fmt::format("{}: expected {}x{} RGB, got {}x{} with {} channels",
                                             view_file_name(i), opts.resolution, opts.resolution, img.width,
                                             img.height, img.channels));
            }
            truth.push_back(std::move(img));
        }
    }
    const std::vector<Image8> renders = render_eval_views(mesh, fields, opts);

    // Every render is embedded once. A ground-truth image reuses the
    // embedding of an identical image instead of issuing another call.
    std::vector<const Image8*> unique;
    std::vector<std::size_t> slot;
    std::map<std::string, std::size_t> by_content;
    for (const auto& r : renders) {
        by_content.emplace(content_hash(r.pixels), unique.size());
        slot.push_back(unique.size());
        unique.push_back(&r);
    }
    for (const auto& t : truth) {
        const auto [it, inserted] = by_content.emplace(content_hash(t.pixels), unique.size());
        if (inserted) {
            unique.push_back(&t);
        }
        slot.push_back(it->second);
    }
    std::vector<EmbeddingVector> unique_emb(unique.size());
    parallel_for(unique.size(), opts.max_in_flight, [&](std::size_t i) {
        const std::vector<float> rgb = dequantize_rgb(*unique[i]);
        unique_emb[i] = embedder.embed_image(rgb, unique[i]->width, unique[i]->height);
    });

    std::vector<std::string> prompts{set.true_prompt};
    prompts.insert(prompts.end(), set.distractors.begin(), set.distractors.end());
    std::sort(prompts.begin() + 1, prompts.end());
    prompts.erase(std::unique(prompts.begin() + 1, prompts.end()), prompts.end());
    std::vector<EmbeddingVector> prompt_emb(prompts.size());
    parallel_for(prompts.size(), opts.max_in_flight,
                 [&](std::size_t i) { prompt_emb[i] = embedder.embed_text(prompts[i]); });
    std::map<std::string, EmbeddingVector> text;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        text.emplace(prompts[i], prompt_emb[i]);
    }

    std::vector<EmbeddingVector> view_emb;
    for (std::size_t i = 0; i < renders.size(); ++i) {
        view_emb.push_back(unique_emb[slot[i]]);
    }

    MetricReport report;
    report.views = opts.views;
    report.candidates = set.candidate_count();
    report.image_embed_calls = static_cast<int>(unique.size());
    report.text_embed_calls = static_cast<int>(prompts.size());
    report.embedding_info = embedder.info();
    report.r_precision = r_precision(view_emb, set, text);
    double its = 0.0;
    for (const auto& e : view_emb) {
        its += image_text_score(e, text.at(set.true_prompt));
    }
    report.image_text_score = its / static_cast<double>(view_emb.size());

    if (!truth.empty()) {
        double iis = 0.0;
        for (std::size_t i = 0; i < renders.size(); ++i) {
            iis += cosine(view_emb[i], unique_emb[slot[renders.size() + i]]);
        }
        report.image_image_score = iis / static_cast<double>(renders.size());
        if (opts.lpips) {
            std::vector<double> values(renders.size());
            parallel_for(renders.size(), opts.max_in_flight, [&](std::size_t i) {
                values[i] = lpips->distance(dequantize_rgb(renders[i]), dequantize_rgb(truth[i]), renders[i].width,
                                            renders[i].height);
            });
            double sum = 0.0;
            for (double v : values) sum += v;
            report.lpips = sum / static_cast<double>(values.size());
        }
    }
    return report;
}

} // namespace dstyle
