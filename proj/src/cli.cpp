#include "progfuse/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>

#include "CLI11.hpp"
#include "progfuse/errors.hpp"
#include "progfuse/image_io.hpp"
#include "progfuse/latent_io.hpp"
#include "progfuse/ops.hpp"
#include "progfuse/remote.hpp"

namespace progfuse::cli {

namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
    PipelineConfig config;
    std::string prompt;
    int factor = 0;
    int phases = 0;
    std::string backend;
    std::string out_dir = "progfuse-out";
    std::string init_latent;
    std::string init_image;
    int stride = 0;
    int jitter = -1;
    bool no_jitter = false;
    bool no_skip_residual = false;
    bool no_dilated = false;
    bool no_progressive = false;
    int latent_size = 128;
    int channels = 4;
    bool mock_decoder = false;
    int tile = 0;
    int margin = 8;
    bool show_config = false;
};

void add_generate_options(CLI::App& cmd, GenerateArgs& a) {
    PipelineConfig& c = a.config;
    cmd.add_option("--prompt", a.prompt, "Prompt text (opaque conditioning)");
    auto* factor = cmd.add_option("--factor", a.factor, "Pixel-count magnification K (perfect square)");
    auto* phases = cmd.add_option("--phases", a.phases, "Number of phases S (side-length scale)");
    factor->excludes(phases);
    phases->excludes(factor);
    cmd.add_option("--seed", c.seed, "Master seed")->capture_default_str();
    cmd.add_option("--backend", a.backend, "mock-oracle | mock-zero | http://host:port (default: $PF_BACKEND_URL)");
    cmd.add_option("--batch-size", c.batch_size, "Maximum paths per denoiser call")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd.add_option("--inflight", c.inflight, "Concurrent denoiser calls per step")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd.add_option("--out", a.out_dir, "Output directory")->capture_default_str();
    cmd.add_flag("--no-skip-residual", a.no_skip_residual, "Disable the skip residual (c1 = 0)");
    cmd.add_flag("--no-dilated", a.no_dilated, "Disable dilated global paths (c2 = 0)");
    cmd.add_flag("--no-progressive", a.no_progressive, "Jump from phase 1 straight to phase S");
    cmd.add_option("--start-t", c.start_t, "Start phases 2..S at this timestep instead of T");
    cmd.add_option("--init-latent", a.init_latent, "Replace phase 1 with this latent file");
    cmd.add_option("--init-image", a.init_image, "Replace phase 1 with this PNG, encoded by the backend");
    cmd.add_option("--stride", a.stride, "Crop stride in latent cells (default: crop size / 2)");
    auto* jitter = cmd.add_option("--jitter", a.jitter, "Maximum crop jitter in cells (default: crop size / 16)");
    cmd.add_flag("--no-jitter", a.no_jitter, "Disable crop jitter")->excludes(jitter);
    cmd.add_flag("--freeze-jitter", c.freeze_jitter, "Draw crop jitter once per phase");
    cmd.add_option("--alpha1", c.decay.alpha1, "Skip-residual decay exponent")->capture_default_str();
    cmd.add_option("--alpha2", c.decay.alpha2, "Global/local fusion decay exponent")->capture_default_str();
    cmd.add_option("--alpha3", c.decay.alpha3, "Filter-sigma decay exponent")->capture_default_str();
    cmd.add_option("--sigma1", c.decay.sigma1, "Initial filter sigma")->capture_default_str();
    cmd.add_option("--sigma2", c.decay.sigma2, "Final filter sigma")->capture_default_str();
    cmd.add_option("--guidance", c.guidance.scale, "Classifier-free guidance scale")->capture_default_str();
    cmd.add_option("--steps", c.schedule.inference_steps, "DDIM steps")->capture_default_str();
    cmd.add_option("--train-steps", c.schedule.train_steps, "Training timesteps")->capture_default_str();
    cmd.add_option("--beta-start", c.schedule.beta_start, "First beta")->capture_default_str();
    cmd.add_option("--beta-end", c.schedule.beta_end, "Last beta")->capture_default_str();
    cmd.add_option("--latent-size", a.latent_size, "Native latent size of mock backends")->capture_default_str();
    cmd.add_option("--channels", a.channels, "Latent channels of mock backends")->capture_default_str();
    cmd.add_flag("--mock-decoder", a.mock_decoder, "Attach the linear mock decoder to mock backends");
    cmd.add_option("--tile", a.tile, "Decoder tile size in latent cells (default: native size)");
    cmd.add_option("--margin", a.margin, "Decoder tile margin in latent cells")->capture_default_str();
    cmd.add_flag("--show-config", a.show_config, "Print the effective configuration and exit");
}

struct Backend {
    std::unique_ptr<Denoiser> denoiser;
    RemoteBackend* remote = nullptr;
    std::unique_ptr<Decoder> mock_decoder;
    std::string identity;

    Decoder* decoder() const {
        if (remote) {
            return remote->scale_factor() > 0 ? remote : nullptr;
        }
        return mock_decoder.get();
    }
};

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << "\n";
}

int generate(GenerateArgs& a, std::ostream& out, std::ostream& err) {
    PipelineConfig& c = a.config;
    c.skip_residual = !a.no_skip_residual;
    c.dilated = !a.no_dilated;
    c.progressive = !a.no_progressive;
    c.stride_h = c.stride_w = a.stride;
    c.jitter = !a.no_jitter;
    c.jitter_max = a.jitter;
    c.guidance.conditioning_id = a.prompt;
    c.guidance.unconditional_id = "";

    if (a.backend.empty()) {
        const char* env = std::getenv("PF_BACKEND_URL");
        a.backend = env && *env ? env : "mock-oracle";
    }

    int S = 1;
    try {
        c.validate();
        if (a.phases > 0) {
            S = a.phases;
        } else if (a.factor > 0) {
            S = plan_phases(a.factor, 1, 1).S;
        } else {
            err << "error: one of --factor or --phases is required\n";
            return kUsage;
        }
        if (a.stride < 0) {
            throw InvalidArgument("--stride must be positive");
        }
        if (a.latent_size <= 0 || a.channels <= 0) {
            throw InvalidArgument("--latent-size and --channels must be positive");
        }
        if (!a.init_latent.empty() && !a.init_image.empty()) {
            throw InvalidArgument("--init-latent and --init-image are mutually exclusive");
        }
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    if (a.show_config) {
        nlohmann::json shown = config_to_json(c);
        shown["phases"] = S;
        shown["backend"] = a.backend;
        out << shown.dump(2) << "\n";
        return kOk;
    }

    Backend backend;
    const NoiseSchedule schedule = c.schedule.build();
    if (a.backend == "mock-oracle") {
        RngStream rng = RngStream::derive(c.seed, StreamPurpose::oracle_target);
        const int base_h = c.base_h > 0 ? c.base_h : a.latent_size;
        const int base_w = c.base_w > 0 ? c.base_w : a.latent_size;
        const Latent z_star = randn(Shape{a.channels, base_h, base_w}, rng);
        backend.denoiser = std::make_unique<OracleDenoiser>(schedule, bicubic_target_chain(z_star, S),
                                                            a.latent_size, a.latent_size);
        backend.identity = "mock-oracle";
    } else if (a.backend == "mock-zero") {
        backend.denoiser = std::make_unique<ZeroDenoiser>(a.channels, a.latent_size, a.latent_size);
        backend.identity = "mock-zero";
    } else if (is_url(a.backend)) {
        auto remote = std::make_unique<RemoteBackend>(a.backend);
        try {
            remote->connect();
            c.guidance.conditioning_id = remote->register_conditioning(a.prompt);
            c.guidance.unconditional_id = remote->register_conditioning("");
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return kBackendUnreachable;
        }
        backend.remote = remote.get();
        backend.denoiser = std::move(remote);
        backend.identity = a.backend;
    } else {
        err << "error: unknown backend '" << a.backend << "' (expected mock-oracle, mock-zero or an http:// URL)\n";
        return kUsage;
    }
    if (a.mock_decoder && !backend.remote) {
        backend.mock_decoder = std::make_unique<LinearMockDecoder>(a.channels, 8);
    }

    std::unique_ptr<Pipeline> pipeline;
    Latent init;
    try {
        pipeline = std::make_unique<Pipeline>(c, *backend.denoiser);
        if (!a.init_latent.empty()) {
            init = read_latent(a.init_latent);
        } else if (!a.init_image.empty()) {
            if (!backend.remote) {
                throw InvalidArgument("--init-image needs a backend with an encoder (an http:// backend)");
            }
            init = backend.remote->encode(read_png(a.init_image));
        }
    } catch (const BackendError& e) {
        err << "error: " << e.what() << "\n";
        return kBackendUnreachable;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    const fs::path out_dir(a.out_dir);
    fs::create_directories(out_dir);
    const PhasePlan plan = pipeline->plan(S);
    Decoder* decoder = backend.decoder();
    TileSpec tiles;
    tiles.tile_h = tiles.tile_w = a.tile > 0 ? a.tile : pipeline->crop_h();
    tiles.margin = std::min(a.margin, tiles.tile_h - 1);

    nlohmann::json manifest;
    manifest["engine"] = "progfuse";
    manifest["version"] = PROGFUSE_VERSION;
    manifest["seed"] = c.seed;
    manifest["backend"] = {{"identity", backend.identity},
                           {"native", {pipeline->crop_h(), pipeline->crop_w()}},
                           {"decoder", decoder != nullptr}};
    manifest["config"] = config_to_json(c);
    manifest["config"]["phases"] = S;
    manifest["prompt"] = a.prompt;
    if (!a.init_latent.empty()) {
        manifest["init_latent"] = a.init_latent;
    }
    if (!a.init_image.empty()) {
        manifest["init_image"] = a.init_image;
    }
    manifest["phases"] = nlohmann::json::array();
    manifest["artifacts"] = nlohmann::json::array();

    RunObserver observer;
    observer.on_phase = [&](PhaseResult& r) {
        const std::string stem = "phase-" + std::to_string(r.phase);
        const fs::path latent_path = out_dir / (stem + ".pflt");
        write_latent(latent_path, r.latent);
        r.preview_path = latent_path.string();
        nlohmann::json entry{{"phase", r.phase},
                             {"shape", {r.latent.channels(), r.latent.height(), r.latent.width()}},
                             {"seconds", r.seconds},
                             {"denoiser_calls", r.denoiser_calls},
                             {"path_steps", r.path_steps},
                             {"preview", latent_path.filename().string()}};
        manifest["artifacts"].push_back(latent_path.filename().string());
        if (decoder) {
            const fs::path png_path = out_dir / (stem + ".png");
            write_png(png_path, tiled_decode(r.latent, *decoder, tiles));
            entry["preview_image"] = png_path.filename().string();
            manifest["artifacts"].push_back(png_path.filename().string());
        }
        manifest["phases"].push_back(entry);
        out << "phase " << r.phase << ": " << r.latent.shape().str() << " in " << std::fixed
            << std::setprecision(3) << r.seconds << " s (" << r.path_steps << " path-steps, " << r.denoiser_calls
            << " calls)\n";
        out.unsetf(std::ios::fixed);
    };

    std::vector<PhaseResult> results;
    try {
        results = init.empty() ? pipeline->run(plan, observer) : pipeline->run_from_latent(init, plan, observer);
    } catch (const Error& e) {
        manifest["status"] = "aborted";
        manifest["error"] = e.what();
        write_json(out_dir / "manifest.json", manifest);
        err << "error: pipeline aborted: " << e.what() << "\n";
        return kPipelineAbort;
    }

    const Latent& final_latent = results.back().latent;
    write_latent(out_dir / "final.pflt", final_latent);
    manifest["artifacts"].push_back("final.pflt");
    if (decoder) {
        write_png(out_dir / "final.png", tiled_decode(final_latent, *decoder, tiles));
        manifest["artifacts"].push_back("final.png");
    }
    manifest["peak_inflight_paths"] = pipeline->peak_inflight_paths();
    manifest["status"] = "ok";
    write_json(out_dir / "manifest.json", manifest);
    out << "final: " << final_latent.shape().str() << " -> " << (out_dir / "final.pflt").string() << "\n";
    return kOk;
}

}  // namespace

nlohmann::json config_to_json(const PipelineConfig& c) {
    return nlohmann::json{
        {"alpha1", c.decay.alpha1},
        {"alpha2", c.decay.alpha2},
        {"alpha3", c.decay.alpha3},
        {"sigma1", c.decay.sigma1},
        {"sigma2", c.decay.sigma2},
        {"guidance", c.guidance.scale},
        {"train_steps", c.schedule.train_steps},
        {"beta_start", c.schedule.beta_start},
        {"beta_end", c.schedule.beta_end},
        {"beta_law", c.schedule.law == BetaLaw::scaled_linear ? "scaled_linear" : "linear"},
        {"steps", c.schedule.inference_steps},
        {"stride", c.stride_h > 0 ? nlohmann::json(c.stride_h) : nlohmann::json("crop/2")},
        {"jitter", !c.jitter ? nlohmann::json(0)
                             : (c.jitter_max >= 0 ? nlohmann::json(c.jitter_max) : nlohmann::json("crop/16"))},
        {"freeze_jitter", c.freeze_jitter},
        {"batch_size", c.batch_size},
        {"inflight", c.inflight},
        {"skip_residual", c.skip_residual},
        {"dilated", c.dilated},
        {"progressive", c.progressive},
        {"start_t", c.start_t},
        {"seed", c.seed},
    };
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"progfuse: progressive high-resolution latent diffusion over an abstract denoiser"};
    app.require_subcommand(1);
    GenerateArgs gen;
    auto* cmd = app.add_subcommand("generate", "Run the phase loop and write previews, final latent and manifest");
    add_generate_options(*cmd, gen);
    cmd->fallthrough();
    // Keys go under a [generate] section; flags override the file.
    app.set_config("--config", "", "Read an INI configuration file (flags override it)");
    app.config_formatter(std::make_shared<CLI::ConfigINI>());

    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help(cmd->parsed() ? "generate" : "");
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    return generate(gen, out, err);
}

}  // namespace progfuse::cli
