#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <string>

#include "progfuse/backend.hpp"
#include "progfuse/decode.hpp"
#include "progfuse/wire.hpp"

namespace progfuse {

struct RemoteOptions {
    std::chrono::milliseconds timeout{60000};
    // Retries after a transport failure; the retry reuses the request id.
    int retries = 1;
};

/// HTTP client for a backend speaking the PFD1 frame protocol:
/// POST /v1/denoise, /v1/decode, /v1/encode, /v1/conditioning and GET /v1/info.
class RemoteBackend final : public Denoiser, public Decoder, public Encoder {
public:
    explicit RemoteBackend(std::string base_url, RemoteOptions options = {});

    // Fetches /v1/info. Throws BackendError (retryable) when unreachable.
    void connect();

    BackendInfo info() const override;
    std::vector<Latent> denoise(const DenoiseRequest& req) override;

    int scale_factor() const override;
    RgbImage decode(const Latent& z) override;
    Latent encode(const RgbImage& image) override;

    // Registers prompt text and returns its conditioning token. Servers that
    // do not implement registration get the text itself as the token.
    std::string register_conditioning(const std::string& text);

    const std::string& base_url() const noexcept { return m_base_url; }

private:
    BackendInfo fetch_info() const;
    wire::Bytes post(const std::string& path, const wire::Bytes& body, const std::string& request_id) const;
    std::string next_request_id(const char* prefix);

    std::string m_base_url;
    RemoteOptions m_options;
    mutable std::mutex m_info_mutex;
    mutable std::optional<BackendInfo> m_info;
    std::atomic<std::uint64_t> m_counter{0};
};

// Client-side checks (non-empty, <= batch_size) happen before any network
// traffic; then the request is sent.
std::vector<Latent> remote_denoise(RemoteBackend& backend, const DenoiseRequest& req, int batch_size);

}  // namespace progfuse
