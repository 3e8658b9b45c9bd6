#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "progfuse/backend.hpp"
#include "progfuse/decode.hpp"
#include "progfuse/errors.hpp"
#include "progfuse/latent_io.hpp"
#include "progfuse/ops.hpp"
#include "progfuse/patching.hpp"
#include "progfuse/pipeline.hpp"
#include "progfuse/schedule.hpp"
#include "progfuse/wire.hpp"

namespace py = pybind11;
using namespace progfuse;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Latent to_latent(const FloatArray& a) {
    if (a.ndim() != 3) {
        throw InvalidArgument("expected a (channels, height, width) array");
    }
    const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2))};
    return Latent(s, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Latent& z) {
    FloatArray out({z.channels(), z.height(), z.width()});
    std::memcpy(out.mutable_data(), z.data().data(), z.size() * sizeof(float));
    return out;
}

std::vector<Latent> to_latents(const std::vector<FloatArray>& xs) {
    std::vector<Latent> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(to_latent(x));
    return out;
}

std::vector<FloatArray> to_arrays(const std::vector<Latent>& zs) {
    std::vector<FloatArray> out;
    out.reserve(zs.size());
    for (const auto& z : zs) out.push_back(to_array(z));
    return out;
}

py::bytes as_bytes(const std::vector<std::uint8_t>& b) {
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

std::vector<std::uint8_t> from_bytes(const py::bytes& b) {
    const std::string s = b;
    return {s.begin(), s.end()};
}

CropSet crop_set(const std::vector<std::pair<int, int>>& crops, int H, int W, int h, int w) {
    CropSet set;
    set.canvas_h = H;
    set.canvas_w = W;
    set.patch_h = h;
    set.patch_w = w;
    for (auto [t, l] : crops) set.crops.push_back({t, l});
    return set;
}

PipelineConfig make_config(std::uint64_t seed, int steps, double guidance, bool skip_residual, bool dilated,
                           bool progressive, bool jitter, int batch_size, int start_t) {
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.schedule.inference_steps = steps;
    cfg.guidance.scale = guidance;
    cfg.guidance.conditioning_id = "cond";
    cfg.guidance.unconditional_id = "uncond";
    cfg.skip_residual = skip_residual;
    cfg.dilated = dilated;
    cfg.progressive = progressive;
    cfg.jitter = jitter;
    cfg.batch_size = batch_size;
    cfg.start_t = start_t;
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "progfuse engine core";

    // Base first: later registrations take precedence.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<CoverageViolation>(m, "CoverageViolation", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_ValueError);

    m.def("upsample_bicubic", [](const FloatArray& z, int h, int w) { return to_array(upsample_bicubic(to_latent(z), h, w)); },
          py::arg("z"), py::arg("height"), py::arg("width"));
    m.def("gaussian_kernel", [](int dilation, double sigma) { return GaussianKernel::for_dilation(dilation, sigma).weights; },
          py::arg("dilation"), py::arg("sigma"));
    m.def("gaussian_filter",
          [](const FloatArray& z, int dilation, double sigma) {
              return to_array(gaussian_filter(to_latent(z), GaussianKernel::for_dilation(dilation, sigma)));
          },
          py::arg("z"), py::arg("dilation"), py::arg("sigma"));
    m.def("randn",
          [](int c, int h, int w, std::uint64_t seed) {
              RngStream rng(seed);
              return to_array(randn({c, h, w}, rng));
          },
          py::arg("channels"), py::arg("height"), py::arg("width"), py::arg("seed"));

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def(py::init([](int train_steps, double beta_start, double beta_end, int steps) {
                 return build_schedule(train_steps, beta_start, beta_end, steps);
             }),
             py::arg("train_steps") = 1000, py::arg("beta_start") = 0.00085, py::arg("beta_end") = 0.012,
             py::arg("inference_steps") = 50)
        .def_property_readonly("train_steps", &NoiseSchedule::train_steps)
        .def_property_readonly("timesteps", &NoiseSchedule::timesteps)
        .def("alpha_bar", &NoiseSchedule::alpha_bar)
        .def("beta", &NoiseSchedule::beta);

    m.def("ddim_step",
          [](const FloatArray& z, const FloatArray& eps, int t, int t_prev, const NoiseSchedule& s) {
              return to_array(ddim_step(to_latent(z), to_latent(eps), t, t_prev, s));
          },
          py::arg("z_t"), py::arg("eps"), py::arg("t"), py::arg("t_prev"), py::arg("schedule"));
    m.def("cfg_combine",
          [](const FloatArray& u, const FloatArray& c, double g) {
              return to_array(cfg_combine(to_latent(u), to_latent(c), g));
          },
          py::arg("eps_uncond"), py::arg("eps_cond"), py::arg("scale"));
    m.def("cosine_decay", &cosine_decay, py::arg("t"), py::arg("T"), py::arg("alpha"));
    m.def("sigma_at",
          [](int t, int T, double alpha3, double sigma1, double sigma2) {
              DecayParams p;
              p.alpha3 = alpha3;
              p.sigma1 = sigma1;
              p.sigma2 = sigma2;
              return sigma_at(t, T, p);
          },
          py::arg("t"), py::arg("T"), py::arg("alpha3") = 1.0, py::arg("sigma1") = 1.0, py::arg("sigma2") = 0.01);

    m.def("plan_crops",
          [](int H, int W, int h, int w, int dh, int dw) {
              std::vector<std::pair<int, int>> out;
              for (const auto& c : plan_crops(H, W, h, w, dh, dw).crops) out.emplace_back(c.top, c.left);
              return out;
          },
          py::arg("H"), py::arg("W"), py::arg("h"), py::arg("w"), py::arg("stride_h"), py::arg("stride_w"));
    m.def("reconstruct_local",
          [](const std::vector<FloatArray>& patches, const std::vector<std::pair<int, int>>& crops, int H, int W) {
              auto ps = to_latents(patches);
              if (ps.empty()) throw InvalidArgument("reconstruct_local: no patches");
              return to_array(reconstruct_local(ps, crop_set(crops, H, W, ps[0].height(), ps[0].width()), H, W));
          },
          py::arg("patches"), py::arg("crops"), py::arg("H"), py::arg("W"));
    m.def("dilated_sample",
          [](const FloatArray& z, int s) { return to_arrays(dilated_sample(to_latent(z), DilationSet(s))); },
          py::arg("z"), py::arg("dilation"));
    m.def("dilated_reconstruct",
          [](const std::vector<FloatArray>& views, int s, int H, int W) {
              return to_array(dilated_reconstruct(to_latents(views), DilationSet(s), H, W));
          },
          py::arg("views"), py::arg("dilation"), py::arg("H"), py::arg("W"));

    m.def("serialize_latent", [](const FloatArray& z) { return as_bytes(serialize_latent(to_latent(z))); });
    m.def("deserialize_latent", [](const py::bytes& b) { return to_array(deserialize_latent(from_bytes(b))); });

    m.def("validate_frame", [](const py::bytes& b) { wire::validate_frame(from_bytes(b)); });
    m.def("encode_denoise_request",
          [](const std::vector<FloatArray>& batch, int t, const std::vector<std::string>& conds,
             const std::string& request_id) {
              DenoiseRequest req;
              req.batch = to_latents(batch);
              req.timestep = t;
              req.conditionings = conds;
              req.request_id = request_id;
              return as_bytes(wire::encode_denoise_request(req));
          },
          py::arg("batch"), py::arg("t"), py::arg("conditionings"), py::arg("request_id"));
    m.def("decode_denoise_request", [](const py::bytes& b) {
        const auto req = wire::decode_denoise_request(from_bytes(b));
        return py::make_tuple(to_arrays(req.batch), req.timestep, req.conditionings, req.request_id);
    });
    m.def("encode_denoise_response",
          [](const std::vector<FloatArray>& eps, const std::string& request_id) {
              return as_bytes(wire::encode_denoise_response(to_latents(eps), request_id));
          },
          py::arg("eps"), py::arg("request_id"));
    m.def("decode_denoise_response",
          [](const py::bytes& b, const std::string& expected) {
              return to_arrays(wire::decode_denoise_response(from_bytes(b), expected));
          },
          py::arg("frame"), py::arg("expected_request_id") = "");

    m.def("decode_mock",
          [](const FloatArray& z, int factor) {
              const Latent l = to_latent(z);
              LinearMockDecoder dec(l.channels(), factor);
              const RgbImage img = dec.decode(l);
              py::array_t<std::uint8_t> out({3, img.height, img.width});
              std::memcpy(out.mutable_data(), img.data.data(), img.data.size());
              return out;
          },
          py::arg("z"), py::arg("factor") = 8);

    // Whole-pipeline runs over the in-process mock backends. Returns one
    // latent per phase.
    m.def("run_pipeline",
          [](int S, const std::string& backend, int channels, int latent_size, std::uint64_t seed, int steps,
             double guidance, bool skip_residual, bool dilated, bool progressive, bool jitter, int batch_size,
             int start_t) {
              const auto cfg = make_config(seed, steps, guidance, skip_residual, dilated, progressive, jitter,
                                           batch_size, start_t);
              std::vector<PhaseResult> runs;
              {
                  py::gil_scoped_release release;
                  if (backend == "mock-oracle") {
                      RngStream rng = RngStream::derive(seed, StreamPurpose::oracle_target);
                      const Latent z_star = randn({channels, latent_size, latent_size}, rng);
                      OracleDenoiser d(cfg.schedule.build(), bicubic_target_chain(z_star, S), latent_size,
                                       latent_size);
                      runs = run_pipeline(S, cfg, d);
                  } else if (backend == "mock-zero") {
                      ZeroDenoiser d(channels, latent_size, latent_size);
                      runs = run_pipeline(S, cfg, d);
                  } else if (backend == "mock-affine") {
                      AffineDenoiser d(channels, latent_size, latent_size);
                      runs = run_pipeline(S, cfg, d);
                  } else {
                      throw InvalidArgument("unknown backend '" + backend +
                                            "' (expected mock-oracle, mock-zero or mock-affine)");
                  }
              }
              std::vector<FloatArray> out;
              for (const auto& r : runs) out.push_back(to_array(r.latent));
              return out;
          },
          py::arg("S"), py::arg("backend") = "mock-oracle", py::arg("channels") = 4, py::arg("latent_size") = 16,
          py::arg("seed") = 0, py::arg("steps") = 50, py::arg("guidance") = 7.5, py::arg("skip_residual") = true,
          py::arg("dilated") = true, py::arg("progressive") = true, py::arg("jitter") = true,
          py::arg("batch_size") = 8, py::arg("start_t") = -1);
    m.def("oracle_target",
          [](int S, int channels, int latent_size, std::uint64_t seed) {
              RngStream rng = RngStream::derive(seed, StreamPurpose::oracle_target);
              return to_arrays(bicubic_target_chain(randn({channels, latent_size, latent_size}, rng), S));
          },
          py::arg("S"), py::arg("channels") = 4, py::arg("latent_size") = 16, py::arg("seed") = 0);
}
