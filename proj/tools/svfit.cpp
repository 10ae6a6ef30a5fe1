// svfit command-line tool. Every subcommand writes run_manifest.txt into its
// output directory. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "svfit/svfit.hpp"

using namespace svfit;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string out;
    std::string prior = default_prior_path();
    double distance = 1.0;
    double intensity = 3.0;
};

RunManifest start_manifest(const std::string& command, int argc, char** argv) {
    RunManifest m;
    m.set_text("command", command);
    std::string line;
    for (int i = 0; i < argc; ++i) line += (i ? " " : "") + std::string(argv[i]);
    m.set_text("argv", line);
    return m;
}

void finish(RunManifest& m, const std::string& dir, std::chrono::steady_clock::time_point t0) {
    m.set("seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    fs::create_directories(dir);
    m.save(dir + "/run_manifest.txt");
}

void save_image(const std::string& path, const Image<float>& img) {
    io::write_png16(path, img.width, img.height, img.channels, std::vector<double>(img.data.begin(), img.data.end()));
}

std::string manifest_path(const std::string& capture) {
    return fs::is_directory(capture) ? (fs::path(capture) / "manifest.json").string() : capture;
}

std::vector<std::string> split_ids(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

std::string join_ids(const std::vector<CaptureView>& views) {
    std::string s;
    for (const auto& v : views) s += (s.empty() ? "" : ",") + v.id;
    return s;
}

std::vector<CaptureView> pick_by_id(const std::vector<CaptureView>& views, const std::vector<std::string>& ids) {
    std::vector<CaptureView> out;
    for (const auto& id : ids) {
        auto it = std::find_if(views.begin(), views.end(), [&](const CaptureView& v) { return v.id == id; });
        if (it == views.end()) throw std::runtime_error("no view with id '" + id + "' in the capture");
        out.push_back(*it);
    }
    return out;
}

/// "--views" is either a count (spread order) or a comma-separated id list.
std::vector<CaptureView> choose_views(const std::vector<CaptureView>& all, const std::string& spec) {
    if (spec.empty()) return all;
    if (spec.find_first_not_of("0123456789") == std::string::npos) return select_views(all, std::stoul(spec));
    return pick_by_id(all, split_ids(spec));
}

GeneratorWeights<float> load_prior(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("prior weights not found: " + path);
    return GeneratorWeights<float>::load_files(path);
}

// ---------------------------------------------------------------------------

struct GenData {
    int count = 1000;
    int resolution = 64;
    std::uint64_t seed = 1;
};

void run_gen_data(const Common& c, const GenData& o, RunManifest& m) {
    ProceduralDatasetConfig cfg;
    cfg.count = o.count;
    cfg.resolution = o.resolution;
    cfg.seed = o.seed;
    io::save_dataset(generate_procedural_dataset(cfg), c.out);
    m.set("data.count", o.count);
    m.set("data.resolution", o.resolution);
    m.set("data.seed", o.seed);
}

struct TrainPrior {
    std::string data;
    std::string arch = "desk";
    int steps = 20000;
    int batch = 8;
    std::uint64_t seed = 7;
    int checkpoint_every = 1000;
    bool resume = false;
};

void run_train_prior(const Common& c, const TrainPrior& o, RunManifest& m) {
    TrainConfig cfg;
    if (o.arch == "tiny") cfg.generator = GeneratorConfig::tiny();
    cfg.discriminator = DiscriminatorConfig::mirror(cfg.generator);
    cfg.dataset.resolution = cfg.generator.resolution();
    cfg.steps = o.steps;
    cfg.batch = o.batch;
    cfg.seed = o.seed;
    cfg.checkpoint_every = o.checkpoint_every;
    fs::create_directories(c.out);
    cfg.checkpoint_path = c.out + "/checkpoint.svt";
    cfg.metrics_path = c.out + "/metrics.csv";
    std::vector<ProceduralSample> data =
        o.data.empty() ? generate_procedural_dataset(cfg.dataset) : io::load_dataset(o.data);
    TrainState st;
    TrainState* resume = nullptr;
    if (o.resume && fs::exists(cfg.checkpoint_path)) {
        st = load_checkpoint(cfg, cfg.checkpoint_path);
        resume = &st;
    } else if (fs::exists(cfg.metrics_path)) {
        fs::remove(cfg.metrics_path);
    }
    TrainState s = train(cfg, data, resume, [](const StepLog& l) {
        std::printf("step %ld  loss_g %.4f  loss_d %.4f  r1 %.5f\n", l.step, l.loss_g, l.loss_d, l.r1);
        std::fflush(stdout);
    });
    s.gen.save_files(c.out + "/prior.svt");
    m.set_text("train.arch", o.arch);
    m.set_text("train.data", o.data.empty() ? "procedural" : o.data);
    m.set("train.samples", data.size());
    m.set("train.steps", o.steps);
    m.set("train.batch", o.batch);
    m.set("train.seed", o.seed);
    m.set("train.lr", cfg.lr);
    m.set("train.r1_gamma", cfg.r1_gamma);
    m.set("train.r1_interval", cfg.r1_interval);
    m.set_text("train.output", c.out + "/prior.svt");
}

struct Sample {
    std::uint64_t seed = 0;
    int count = 1;
};

void run_sample(const Common& c, const Sample& o, RunManifest& m) {
    auto g = load_prior(c.prior);
    const CaptureView view = make_collocated_view(c.distance, c.intensity, g.config.resolution());
    for (int i = 0; i < o.count; ++i) {
        const std::uint64_t seed = o.seed + i;
        auto s = sample_material(g, seed);
        const std::string dir = c.out + "/sample_" + std::to_string(seed);
        io::save_bundle(s.maps, dir);
        s.latent.save_file(dir + "/latent.svt");
        save_image(dir + "/render.png", render(s.maps, view).cast<float>());
    }
    m.set_text("prior", c.prior);
    m.set("sample.seed", o.seed);
    m.set("sample.count", o.count);
}

struct Fit {
    std::string capture;
    std::string views;
    std::string strategy = "s3";
    std::string space = "wplus_noise";
    std::string init = "mean";
    std::string init_file;
    std::string preset;
    std::string init_maps;
    int iters = 2000;
    int period = 10;
    double lr = 0.01;
    bool direct = false;
    bool refine = false;
    int refine_iters = 500;
    int mean_samples = 10000;
    std::string compare = "gamma";
};

FitConfig fit_config(const Fit& o) {
    FitConfig f;
    f.strategy = parse_strategy(o.strategy);
    f.space = parse_latent_space(o.space);
    f.init = parse_init_kind(o.init);
    f.init_file = o.init_file;
    f.preset_file = o.preset;
    f.iterations = o.iters;
    f.period = o.period;
    f.lr = o.lr;
    f.post_refine = o.refine;
    f.refine_iterations = o.refine_iters;
    f.mean_w_samples = o.mean_samples;
    f.validate();
    return f;
}

void run_fit(const Common& c, const Fit& o, RunManifest& m) {
    const FitConfig f = fit_config(o);
    LossConfig loss;
    loss.space = parse_compare_space(o.compare);
    const auto capture = io::load_manifest(manifest_path(o.capture));
    const auto views = choose_views(io::load_views(capture), o.views);
    const auto fx = FeatureExtractor<float>::random();
    fs::create_directories(c.out);
    m.set_text("fit.capture", manifest_path(o.capture));
    m.set_text("fit.views", join_ids(views));
    m.set_text("fit.mode", o.direct ? "direct" : "latent");
    record(m, f, loss);
    SvbrdfMaps<float> maps;
    std::vector<TraceEntry> trace;
    double initial = 0, final_loss = 0;
    bool diverged = false;
    if (o.direct) {
        SvbrdfMaps<float> init = o.init_maps.empty() ? neutral_maps<float>(capture.resolution, capture.resolution)
                                                     : io::load_bundle<float>(o.init_maps);
        auto r = fit_direct(views, init, f, loss, fx);
        maps = r.maps;
        trace = r.trace;
        initial = r.initial_loss;
        final_loss = r.final_loss;
        diverged = r.diverged;
    } else {
        auto g = load_prior(c.prior);
        if (g.config.resolution() != capture.resolution)
            throw std::runtime_error("capture resolution " + std::to_string(capture.resolution) +
                                     " does not match the prior's " + std::to_string(g.config.resolution()));
        m.set_text("prior", c.prior);
        auto r = fit(views, g, f, loss, fx);
        maps = r.maps;
        trace = r.trace;
        initial = r.initial_loss;
        final_loss = r.final_loss;
        diverged = r.diverged;
        r.latent.save_file(c.out + "/latent.svt");
        m.set_text("fit.init_used", r.init);
    }
    io::save_bundle(maps, c.out);
    write_trace(c.out + "/trace.csv", trace);
    for (const auto& v : views) save_image(c.out + "/render_" + v.id + ".png", render(maps, v));
    m.set("fit.initial_loss", initial);
    m.set("fit.final_loss", final_loss);
    m.set("fit.diverged", diverged ? 1 : 0);
    std::printf("loss %.6g -> %.6g%s\n", initial, final_loss, diverged ? " (diverged, kept best iterate)" : "");
}

struct Embed {
    std::string target;
    std::string init = "mean";
    std::string init_file;
    int iters = 2000;
    std::string space = "wplus_noise";
    std::string strategy = "s3";
};

void run_embed(const Common& c, const Embed& o, RunManifest& m) {
    auto g = load_prior(c.prior);
    FitConfig f;
    f.iterations = o.iters;
    f.space = parse_latent_space(o.space);
    f.strategy = parse_strategy(o.strategy);
    f.init = parse_init_kind(o.init);
    f.init_file = o.init_file;
    if (f.init == InitKind::dual) throw std::invalid_argument("embed supports --init mean|lowrough|file");
    f.validate();
    LossConfig loss;
    const auto fx = FeatureExtractor<float>::random();
    auto target = io::load_bundle<float>(o.target);
    auto r = embed_maps(target, g, resolve_init(f.init, g, f), f, loss, fx, SyntheticCapture{c.distance, c.intensity});
    io::save_bundle(r.maps, c.out);
    r.latent.save_file(c.out + "/latent.svt");
    write_trace(c.out + "/trace.csv", r.trace);
    m.set_text("prior", c.prior);
    m.set_text("embed.target", o.target);
    record(m, f, loss);
    m.set("embed.final_loss", r.final_loss);
    m.set("embed.map_rmse", map_rmse(r.maps, target).overall);
    std::printf("embed loss %.6g, map RMSE %.4g\n", r.final_loss, map_rmse(r.maps, target).overall);
}

struct Render {
    std::string maps;
    std::vector<double> camera;
    std::vector<double> light;
    double spacing = 1.0 / 3.0;
    double size = 1.0;
    std::string prefix = "view";
};

void run_render(const Common& c, const Render& o, RunManifest& m) {
    auto maps = io::load_bundle<float>(o.maps);
    std::string why;
    if (!check_invariants(maps, &why)) throw std::runtime_error("maps violate invariants: " + why);
    std::vector<CaptureView> views;
    if (!o.camera.empty()) {
        if (o.camera.size() % 3 != 0 || (!o.light.empty() && o.light.size() != o.camera.size()))
            throw std::invalid_argument("--camera takes x y z triples; --light must match it");
        for (std::size_t i = 0; i < o.camera.size(); i += 3) {
            CaptureView v = make_collocated_view(c.distance, c.intensity, maps.width());
            v.id = o.prefix + std::to_string(i / 3);
            v.camera_position = {o.camera[i], o.camera[i + 1], o.camera[i + 2]};
            v.light_position = o.light.empty() ? v.camera_position : Vec3d{o.light[i], o.light[i + 1], o.light[i + 2]};
            views.push_back(v);
        }
    } else {
        views = capture_grid(c.distance, c.intensity, maps.width(), o.spacing);
    }
    for (auto& v : views) {
        v.height = maps.height();
        v.plane_size = o.size;
        v.validate();
        v.image = render(maps, v);
    }
    io::save_capture(c.out, views);
    m.set_text("render.maps", o.maps);
    m.set("render.views", views.size());
    m.set("render.intensity", c.intensity);
}

struct Morph {
    std::string a, b;
    std::uint64_t seed_a = 1, seed_b = 2;
    int steps = 5;
};

void run_morph(const Common& c, const Morph& o, RunManifest& m) {
    auto g = load_prior(c.prior);
    auto get = [&](const std::string& file, std::uint64_t seed) {
        if (file.empty()) return sample_material(g, seed).latent;
        auto s = LatentState<float>::load_file(file);
        s.validate(g.config);
        return s;
    };
    auto la = get(o.a, o.seed_a), lb = get(o.b, o.seed_b);
    const CaptureView view = make_collocated_view(c.distance, c.intensity, g.config.resolution());
    auto r = morph(g, la, lb, o.steps, view);
    for (int i = 0; i < o.steps; ++i) {
        const std::string k = std::to_string(i);
        io::save_bundle(r.latent[i], c.out + "/latent_" + k);
        io::save_bundle(r.pixel[i], c.out + "/pixel_" + k);
        save_image(c.out + "/latent_" + k + ".png", r.latent_renders[i].cast<float>());
        save_image(c.out + "/pixel_" + k + ".png", r.pixel_renders[i].cast<float>());
    }
    m.set_text("prior", c.prior);
    m.set_text("morph.a", o.a.empty() ? "seed " + std::to_string(o.seed_a) : o.a);
    m.set_text("morph.b", o.b.empty() ? "seed " + std::to_string(o.seed_b) : o.b);
    m.set("morph.steps", o.steps);
}

struct Eval {
    std::string maps, gt, capture, novel, run, fit_views;
};

void run_eval(const Common& c, const Eval& o, RunManifest& m) {
    auto maps = io::load_bundle<float>(o.maps);
    SvbrdfMaps<float> gt;
    if (!o.gt.empty()) gt = io::load_bundle<float>(o.gt);
    std::vector<CaptureView> fit_views, novel_views;
    std::string fit_ids = o.fit_views;
    std::string capture = o.capture;
    if (!o.run.empty()) {
        auto rm = RunManifest::load((fs::path(o.run) / "run_manifest.txt").string());
        if (fit_ids.empty()) fit_ids = rm.get("fit.views");
        if (capture.empty()) capture = rm.get("fit.capture");
    }
    if (!capture.empty()) {
        auto all = io::load_views(io::load_manifest(manifest_path(capture)));
        std::set<std::string> used;
        if (!fit_ids.empty()) {
            fit_views = pick_by_id(all, split_ids(fit_ids));
            for (const auto& v : fit_views) used.insert(v.id);
        }
        if (o.novel.empty())
            for (const auto& v : all)
                if (!used.count(v.id)) novel_views.push_back(v);
    }
    if (!o.novel.empty()) novel_views = io::load_views(io::load_manifest(manifest_path(o.novel)));
    for (auto& v : fit_views) v.validate();
    const auto fx = FeatureExtractor<float>::random();
    EvalReport r = eval_fit(maps, o.gt.empty() ? nullptr : &gt, fit_views, novel_views, fx);
    fs::create_directories(c.out);
    r.save(c.out + "/report.txt");
    std::cout << r.to_text();
    m.set_text("eval.maps", o.maps);
    if (!o.gt.empty()) m.set_text("eval.ground_truth", o.gt);
    if (!capture.empty()) m.set_text("eval.capture", manifest_path(capture));
    m.set_text("eval.fit_views", join_ids(fit_views));
    m.set_text("eval.novel_views", join_ids(novel_views));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"svfit: material capture with a learned prior"};
    app.require_subcommand(1);
    Common c;
    auto add_out = [&](CLI::App* s) { s->add_option("-o,--out", c.out, "output directory")->required(); };
    auto add_prior = [&](CLI::App* s) {
        s->add_option("--prior", c.prior, "generator weights (.svt, with .cfg alongside)")->capture_default_str();
    };
    auto add_light = [&](CLI::App* s) {
        s->add_option("--distance", c.distance, "collocated camera/flash height")->capture_default_str();
        s->add_option("--intensity", c.intensity, "flash intensity")->capture_default_str();
    };

    GenData gd;
    auto* s_gen = app.add_subcommand("gen-data", "write a procedural training set (one map bundle per sample)");
    add_out(s_gen);
    s_gen->add_option("--count", gd.count)->capture_default_str();
    s_gen->add_option("--resolution", gd.resolution)->capture_default_str();
    s_gen->add_option("--seed", gd.seed)->capture_default_str();

    TrainPrior tp;
    auto* s_train = app.add_subcommand("train-prior", "train the generator prior");
    add_out(s_train);
    s_train->add_option("--data", tp.data, "dataset directory from gen-data (default: procedural in memory)");
    s_train->add_option("--arch", tp.arch, "desk (64x64) or tiny")
        ->check(CLI::IsMember({"desk", "tiny"}))
        ->capture_default_str();
    s_train->add_option("--steps", tp.steps)->capture_default_str();
    s_train->add_option("--batch", tp.batch)->capture_default_str();
    s_train->add_option("--seed", tp.seed)->capture_default_str();
    s_train->add_option("--checkpoint-every", tp.checkpoint_every)->capture_default_str();
    s_train->add_flag("--resume", tp.resume, "continue from <out>/checkpoint.svt");

    Sample sp;
    auto* s_sample = app.add_subcommand("sample", "draw materials from the prior");
    add_out(s_sample);
    add_prior(s_sample);
    add_light(s_sample);
    s_sample->add_option("--seed", sp.seed)->capture_default_str();
    s_sample->add_option("--count", sp.count)->capture_default_str();

    Fit ft;
    auto* s_fit = app.add_subcommand("fit", "estimate maps from a capture");
    add_out(s_fit);
    add_prior(s_fit);
    s_fit->add_option("--capture", ft.capture, "capture manifest.json or its directory")->required();
    s_fit->add_option("--views", ft.views, "view count (spread order) or comma-separated ids");
    s_fit->add_option("--strategy", ft.strategy)->check(CLI::IsMember({"s1", "s2", "s3"}))->capture_default_str();
    s_fit->add_option("--space", ft.space)->check(CLI::IsMember({"w", "wplus", "wplus_noise"}))->capture_default_str();
    s_fit->add_option("--init", ft.init)
        ->check(CLI::IsMember({"mean", "lowrough", "dual", "file"}))
        ->capture_default_str();
    s_fit->add_option("--init-file", ft.init_file, "latent file for --init file");
    s_fit->add_option("--preset", ft.preset, "low-roughness latent (default: bundled)");
    s_fit->add_option("--init-maps", ft.init_maps, "starting bundle for --direct");
    s_fit->add_option("--iters", ft.iters)->capture_default_str();
    s_fit->add_option("--period", ft.period, "S3 alternation period")->capture_default_str();
    s_fit->add_option("--lr", ft.lr)->capture_default_str();
    s_fit->add_flag("--direct", ft.direct, "optimize the maps directly, no prior");
    s_fit->add_flag("--refine", ft.refine, "pixel-space refinement after the latent fit");
    s_fit->add_option("--refine-iters", ft.refine_iters)->capture_default_str();
    s_fit->add_option("--mean-samples", ft.mean_samples, "samples for the mean latent")->capture_default_str();
    s_fit->add_option("--compare", ft.compare, "loss space")->check(CLI::IsMember({"gamma", "linear"}))->capture_default_str();

    Embed em;
    auto* s_embed = app.add_subcommand("embed", "find the latent reproducing a map bundle");
    add_out(s_embed);
    add_prior(s_embed);
    add_light(s_embed);
    s_embed->add_option("--target", em.target, "map bundle directory")->required();
    s_embed->add_option("--init", em.init)->check(CLI::IsMember({"mean", "lowrough", "file"}))->capture_default_str();
    s_embed->add_option("--init-file", em.init_file);
    s_embed->add_option("--iters", em.iters)->capture_default_str();
    s_embed->add_option("--space", em.space)->check(CLI::IsMember({"w", "wplus", "wplus_noise"}))->capture_default_str();
    s_embed->add_option("--strategy", em.strategy)->check(CLI::IsMember({"s1", "s2", "s3"}))->capture_default_str();

    Render rd;
    auto* s_render = app.add_subcommand("render", "render a map bundle into a synthetic capture");
    add_out(s_render);
    add_light(s_render);
    s_render->add_option("--maps", rd.maps, "map bundle directory")->required();
    s_render->add_option("--camera", rd.camera, "explicit views: camera x y z per view (default: 3x3 grid)")
        ->expected(3, 3 * 64);
    s_render->add_option("--light", rd.light, "light x y z per view (default: at the camera)")->expected(3, 3 * 64);
    s_render->add_option("--id-prefix", rd.prefix, "id prefix for explicit views")->capture_default_str();
    s_render->add_option("--spacing", rd.spacing, "3x3 grid spacing")->capture_default_str();
    s_render->add_option("--size", rd.size, "sample edge length")->capture_default_str();

    Morph mp;
    auto* s_morph = app.add_subcommand("morph", "interpolate two latents");
    add_out(s_morph);
    add_prior(s_morph);
    add_light(s_morph);
    s_morph->add_option("--a", mp.a, "latent file (default: sample of --seed-a)");
    s_morph->add_option("--b", mp.b, "latent file (default: sample of --seed-b)");
    s_morph->add_option("--seed-a", mp.seed_a)->capture_default_str();
    s_morph->add_option("--seed-b", mp.seed_b)->capture_default_str();
    s_morph->add_option("--steps", mp.steps)->capture_default_str();

    Eval ev;
    auto* s_eval = app.add_subcommand("eval", "score fitted maps");
    add_out(s_eval);
    s_eval->add_option("--maps", ev.maps, "fitted map bundle")->required();
    s_eval->add_option("--gt", ev.gt, "ground-truth map bundle");
    s_eval->add_option("--capture", ev.capture, "capture manifest (default: the one recorded by --run)");
    s_eval->add_option("--run", ev.run, "fit output directory; supplies the fit view ids");
    s_eval->add_option("--fit-views", ev.fit_views, "comma-separated ids of the views used for fitting");
    s_eval->add_option("--novel", ev.novel, "held-out capture (default: capture views not used for fitting)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << sub->help();
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest m = start_manifest(sub->get_name(), argc, argv);
    try {
        const std::string name = sub->get_name();
        if (name == "gen-data") run_gen_data(c, gd, m);
        else if (name == "train-prior") run_train_prior(c, tp, m);
        else if (name == "sample") run_sample(c, sp, m);
        else if (name == "fit") run_fit(c, ft, m);
        else if (name == "embed") run_embed(c, em, m);
        else if (name == "render") run_render(c, rd, m);
        else if (name == "morph") run_morph(c, mp, m);
        else if (name == "eval") run_eval(c, ev, m);
        m.set_text("status", "ok");
        finish(m, c.out, t0);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        try {
            m.set_text("status", "failed");
            m.set_text("error", std::string(e.what()).substr(0, std::string(e.what()).find('\n')));
            finish(m, c.out, t0);
        } catch (...) {
        }
        return 1;
    }
    return 0;
}
