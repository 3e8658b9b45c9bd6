#include "progfuse/remote.hpp"

#include "httplib.h"
#include "progfuse/errors.hpp"

namespace progfuse {

namespace {

constexpr const char* kContentType = "application/octet-stream";

httplib::Client make_client(const std::string& base_url, std::chrono::milliseconds timeout) {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    return cli;
}

}  // namespace

RemoteBackend::RemoteBackend(std::string base_url, RemoteOptions options)
    : m_base_url(std::move(base_url)), m_options(options) {
    while (!m_base_url.empty() && m_base_url.back() == '/') {
        m_base_url.pop_back();
    }
    if (m_base_url.empty()) {
        throw InvalidArgument("remote backend URL is empty");
    }
}

void RemoteBackend::connect() {
    BackendInfo info = fetch_info();
    std::lock_guard lock(m_info_mutex);
    m_info = info;
}

BackendInfo RemoteBackend::fetch_info() const {
    auto cli = make_client(m_base_url, m_options.timeout);
    auto res = cli.Get("/v1/info");
    if (!res) {
        throw BackendError("backend unreachable at " + m_base_url + ": " + httplib::to_string(res.error()), {}, true);
    }
    if (res->status != 200) {
        throw BackendError("GET /v1/info returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    BackendInfo info;
    try {
        const auto j = nlohmann::json::parse(res->body);
        info.kind = "remote";
        info.native_h = j.at("native_h").get<int>();
        info.native_w = j.at("native_w").get<int>();
        info.channels = j.at("channels").get<int>();
        info.max_batch = j.value("max_batch", 0);
        info.decode_factor = j.value("decode_factor", 0);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed /v1/info response: ") + e.what());
    }
    return info;
}

BackendInfo RemoteBackend::info() const {
    {
        std::lock_guard lock(m_info_mutex);
        if (m_info) {
            return *m_info;
        }
    }
    BackendInfo info = fetch_info();
    std::lock_guard lock(m_info_mutex);
    if (!m_info) {
        m_info = info;
    }
    return *m_info;
}

std::string RemoteBackend::next_request_id(const char* prefix) {
    return std::string(prefix) + "-" + std::to_string(m_counter++);
}

wire::Bytes RemoteBackend::post(const std::string& path, const wire::Bytes& body,
                                const std::string& request_id) const {
    const std::string payload(body.begin(), body.end());
    std::string last_error;
    for (int attempt = 0; attempt <= m_options.retries; ++attempt) {
        auto cli = make_client(m_base_url, m_options.timeout);
        auto res = cli.Post(path, payload, kContentType);
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            throw BackendError("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body,
                               request_id, res->status == 503);
        }
        return wire::Bytes(res->body.begin(), res->body.end());
    }
    throw BackendError("POST " + path + " failed after " + std::to_string(m_options.retries + 1) +
                           " attempt(s) (request " + request_id + "): " + last_error,
                       request_id, true);
}

std::vector<Latent> RemoteBackend::denoise(const DenoiseRequest& req) {
    if (req.batch.empty()) {
        throw InvalidArgument("remote denoise: empty batch");
    }
    DenoiseRequest sent = req;
    if (sent.request_id.empty()) {
        sent.request_id = next_request_id("denoise");
    }
    const auto response = post("/v1/denoise", wire::encode_denoise_request(sent), sent.request_id);
    auto eps = wire::decode_denoise_response(response, sent.request_id);
    if (eps.size() != sent.batch.size() * sent.conditionings.size()) {
        throw ProtocolError("denoise response holds " + std::to_string(eps.size()) + " predictions, expected " +
                            std::to_string(sent.batch.size() * sent.conditionings.size()));
    }
    return eps;
}

int RemoteBackend::scale_factor() const { return info().decode_factor; }

RgbImage RemoteBackend::decode(const Latent& z) {
    const std::string id = next_request_id("decode");
    const auto response = post("/v1/decode", wire::encode_latent("decode", z, id), id);
    return wire::decode_image(response);
}

Latent RemoteBackend::encode(const RgbImage& image) {
    const std::string id = next_request_id("encode");
    const auto response = post("/v1/encode", wire::encode_image("encode", image, id), id);
    return wire::decode_latent(response);
}

std::string RemoteBackend::register_conditioning(const std::string& text) {
    auto cli = make_client(m_base_url, m_options.timeout);
    const nlohmann::json body{{"text", text}};
    auto res = cli.Post("/v1/conditioning", body.dump(), "application/json");
    if (!res) {
        throw BackendError("backend unreachable at " + m_base_url + ": " + httplib::to_string(res.error()), {}, true);
    }
    if (res->status == 404) {
        return text;
    }
    if (res->status != 200) {
        throw BackendError("POST /v1/conditioning returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
        return nlohmann::json::parse(res->body).at("token").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed /v1/conditioning response: ") + e.what());
    }
}

std::vector<Latent> remote_denoise(RemoteBackend& backend, const DenoiseRequest& req, int batch_size) {
    if (req.batch.empty()) {
        throw InvalidArgument("remote_denoise: empty batch");
    }
    if (batch_size > 0 && static_cast<int>(req.batch.size()) > batch_size) {
        throw InvalidArgument("remote_denoise: batch of " + std::to_string(req.batch.size()) +
                              " exceeds batch_size " + std::to_string(batch_size));
    }
    return backend.denoise(req);
}

}  // namespace progfuse
