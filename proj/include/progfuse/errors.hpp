#pragma once

#include <stdexcept>
#include <string>

namespace progfuse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A crop plan left at least one latent cell without any covering patch.
class CoverageViolation : public Error {
public:
    using Error::Error;
};

// Malformed latent/image file.
class FormatError : public Error {
public:
    using Error::Error;
};

// Malformed wire frame.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    BackendError(const std::string& what, std::string request_id = {}, bool retryable = false)
        : Error(what), m_request_id(std::move(request_id)), m_retryable(retryable) {}

    const std::string& request_id() const noexcept { return m_request_id; }
    bool retryable() const noexcept { return m_retryable; }

private:
    std::string m_request_id;
    bool m_retryable;
};

// Raised by the orchestrator; carries where in the run the failure happened.
class PipelineError : public Error {
public:
    PipelineError(const std::string& what, int phase, int timestep, int batch)
        : Error(what), m_phase(phase), m_timestep(timestep), m_batch(batch) {}

    int phase() const noexcept { return m_phase; }
    int timestep() const noexcept { return m_timestep; }
    int batch() const noexcept { return m_batch; }

private:
    int m_phase;
    int m_timestep;
    int m_batch;
};

}  // namespace progfuse
