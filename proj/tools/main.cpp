// Command-line front end: dataset generation, metric training, retrieval
// evaluation, pose generalization and gradient checking.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spatial/dataset.hpp"
#include "spatial/geometry.hpp"
#include "spatial/gradcheck.hpp"
#include "spatial/network.hpp"
#include "spatial/pose_opt.hpp"
#include "spatial/projection.hpp"
#include "spatial/tensor.hpp"
#include "spatial/training.hpp"

namespace fs = std::filesystem;
using namespace spatial;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::string preset = "desk";
};

// Provenance: every run records the fully resolved configuration next to
// its outputs.
void write_resolved_config(const CLI::App& app, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "run_config.txt");
    out << app.config_to_str(true, false);
}

std::vector<std::vector<double>> embed_all(const std::vector<Scene>& scenes,
                                           const MetricNet& net) {
    std::vector<std::vector<double>> embeddings;
    embeddings.reserve(scenes.size());
    for (const Scene& s : scenes) embeddings.push_back(embed_scene_eval(s, net).embedding.data);
    return embeddings;
}

int cmd_gen_data(const GlobalOpts& g, int n_scenes, const std::vector<std::string>& class_names,
                 int points, int n_splits, double test_fraction) {
    std::vector<RelationClass> classes;
    if (class_names.empty()) {
        classes = all_relation_classes();
    } else {
        for (const std::string& name : class_names) {
            auto c = relation_class_by_name(name);
            if (!c) throw std::runtime_error("unknown relation class: " + name);
            classes.push_back(*c);
        }
    }

    Rng rng(g.seed);
    const auto templates = default_template_set(rng, points);
    const Dataset ds = generate_dataset(n_scenes, classes, templates, g.seed);
    save_dataset(g.out_dir, ds);

    const auto splits = make_splits(ds.labels.scene_ids, n_splits, test_fraction, g.seed);
    fs::create_directories(fs::path(g.out_dir) / "splits");
    for (std::size_t k = 0; k < splits.size(); ++k)
        save_split((fs::path(g.out_dir) / "splits" / (std::to_string(k) + ".txt")).string(),
                   splits[k]);

    for (const std::string& cls : ds.labels.distinct_classes()) {
        int count = 0;
        for (const std::string& tag : ds.labels.class_of) count += (tag == cls);
        std::cout << cls << ": " << count << " scenes\n";
    }
    for (const std::string& msg : ds.skipped_pairs) std::cout << "skipped: " << msg << "\n";
    std::cout << "wrote " << ds.scenes.size() << " scenes to " << g.out_dir << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir, std::int64_t iters, int batch,
              bool overfit_one_batch, double lr0, std::int64_t period) {
    const ArchitectureConfig arch = ArchitectureConfig::by_name(g.preset);
    const Dataset ds = load_dataset(data_dir);

    TrainConfig cfg;
    cfg.seed = g.seed;
    cfg.iterations = iters >= 0 ? iters : (g.preset == "paper" ? 14000 : 2000);
    cfg.batch_triplets = batch > 0 ? batch : (g.preset == "paper" ? 100 : 6);
    cfg.schedule.initial_lr = lr0;
    cfg.schedule.period = period;
    cfg.overfit_one_batch = overfit_one_batch;

    MetricNet net(arch);
    Rng init_rng(g.seed);
    net.init_params(init_rng);
    std::cout << net.summary();

    const TrainResult result = train(ds.scenes, ds.labels, cfg, net);

    fs::create_directories(g.out_dir);
    save_network((fs::path(g.out_dir) / "checkpoint.bin").string(), net);
    save_train_log((fs::path(g.out_dir) / "train_log.csv").string(), result.log);
    if (!result.log.empty())
        std::cout << "first_loss=" << result.log.front().loss
                  << " last_loss=" << result.log.back().loss << "\n";
    std::cout << "wrote checkpoint and log to " << g.out_dir << "\n";
    return 0;
}

int cmd_retrieve(const GlobalOpts& g, const std::string& data_dir, const std::string& ckpt,
                 const std::string& split_file, int n_splits, double test_fraction,
                 bool do_cross_validate, std::int64_t cv_iters, int cv_batch) {
    const ArchitectureConfig arch = ArchitectureConfig::by_name(g.preset);
    const Dataset ds = load_dataset(data_dir);

    double acc3 = 0.0, acc5 = 0.0;
    if (do_cross_validate) {
        TrainConfig cfg;
        cfg.seed = g.seed;
        cfg.iterations = cv_iters >= 0 ? cv_iters : (g.preset == "paper" ? 14000 : 2000);
        cfg.batch_triplets = cv_batch > 0 ? cv_batch : (g.preset == "paper" ? 100 : 6);
        const CrossValidationResult cv =
            cross_validate(ds.scenes, ds.labels, n_splits, test_fraction, cfg, arch);
        acc3 = cv.mean_3of5;
        acc5 = cv.mean_5of5;
        std::cout << "std3of5=" << cv.std_3of5 << " std5of5=" << cv.std_5of5 << "\n";
    } else {
        if (ckpt.empty()) {
            std::cerr << "retrieve requires --ckpt unless --cross-validate is given\n";
            return 2;
        }
        const MetricNet net = load_network(ckpt);
        if (net.config().resolution != arch.resolution) {
            std::cerr << "checkpoint resolution " << net.config().resolution
                      << " does not match preset '" << g.preset << "' resolution "
                      << arch.resolution << "\n";
            return 1;
        }
        const auto embeddings = embed_all(ds.scenes, net);
        std::vector<DatasetSplit> splits;
        if (!split_file.empty())
            splits.push_back(load_split(split_file));
        else
            splits = make_splits(ds.labels.scene_ids, n_splits, test_fraction, g.seed);
        for (const DatasetSplit& split : splits) {
            const RetrievalResult r = knn_retrieval(embeddings, ds.labels, split);
            acc3 += r.acc_3of5;
            acc5 += r.acc_5of5;
        }
        acc3 /= static_cast<double>(splits.size());
        acc5 /= static_cast<double>(splits.size());
    }
    std::cout << "acc3of5=" << acc3 << " acc5of5=" << acc5 << "\n";
    return 0;
}

int cmd_generalize(const GlobalOpts& g, const std::string& reference_path,
                   const std::string& test_path, const std::string& ckpt, int steps, double lr,
                   int kernel, double threshold, bool dump_projections) {
    const MetricNet net = load_network(ckpt);
    const Scene reference = load_scene(reference_path);
    const Scene test = load_scene(test_path);

    GeneralizationConfig cfg;
    cfg.lr = lr;
    cfg.max_steps = steps;
    cfg.kernel_size = kernel;
    cfg.distance_threshold = threshold;
    cfg.seed = g.seed;

    fs::create_directories(g.out_dir);
    const std::string dump_dir =
        dump_projections ? (fs::path(g.out_dir) / "projections").string() : std::string();
    const GeneralizationResult result = generalize(reference, test, net, cfg, dump_dir);

    save_scene((fs::path(g.out_dir) / "generalized.scene").string(), result.final_scene);
    save_trace((fs::path(g.out_dir) / "trace.csv").string(), result.trace);
    std::cout << "d_init=" << result.initial_distance << " d_final=" << result.final_distance
              << " steps=" << result.trace.entries.size() << "\n";
    if (result.aborted) {
        std::cerr << "aborted: " << result.abort_reason << "\n";
        return 1;
    }
    return 0;
}

int cmd_gradcheck(const GlobalOpts& g, int instances, bool inject_elu_fault) {
    g_elu_backward_fault = inject_elu_fault;
    const auto reports = run_gradient_checks(g.seed, instances);
    g_elu_backward_fault = false;

    bool all_pass = true;
    for (const GradCheckReport& r : reports) {
        std::printf("op=%s max_rel_err=%.3e tol=%.0e %s\n", r.op.c_str(), r.max_rel_err,
                    r.tolerance, r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pairwise spatial-relation metric: data, training, retrieval, generalization"};
    app.require_subcommand(1);
    app.fallthrough(true);
    app.set_config("--config", "", "key=value config file; command-line flags take precedence");

    GlobalOpts g;
    app.add_option("--seed", g.seed, "global random seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--preset", g.preset, "architecture preset")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset")->fallthrough();
    int n_scenes = 0, points = 256, gen_splits = 5;
    double gen_test_fraction = 0.2;
    std::vector<std::string> class_names;
    gen->add_option("--scenes", n_scenes, "total scene count")->required();
    gen->add_option("--classes", class_names, "relation classes (default: all)");
    gen->add_option("--points", points, "points per object cloud")->capture_default_str();
    gen->add_option("--splits", gen_splits, "number of train/test splits")->capture_default_str();
    gen->add_option("--test-fraction", gen_test_fraction, "test fraction per split")
        ->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "train the metric network")->fallthrough();
    std::string train_data;
    std::int64_t iters = -1, period = 1500;
    int batch = -1;
    double lr0 = 0.001;
    bool overfit = false;
    tr->add_option("--data", train_data, "dataset directory")->required();
    tr->add_option("--iters", iters, "training iterations (default: preset)");
    tr->add_option("--batch", batch, "triplets per batch (default: preset)");
    tr->add_option("--lr0", lr0, "initial learning rate")->capture_default_str();
    tr->add_option("--period", period, "warm-restart period")->capture_default_str();
    tr->add_flag("--overfit-one-batch", overfit, "smoke mode: repeat one fixed triplet");

    // retrieve
    auto* re = app.add_subcommand("retrieve", "nearest-neighbor retrieval accuracy")->fallthrough();
    std::string retrieve_data, ckpt_path, split_file;
    int re_splits = 5, cv_batch = -1;
    double re_test_fraction = 0.2;
    bool do_cv = false;
    std::int64_t cv_iters = -1;
    re->add_option("--data", retrieve_data, "dataset directory")->required();
    re->add_option("--ckpt", ckpt_path, "checkpoint path");
    re->add_option("--split", split_file, "evaluate one explicit split file");
    re->add_option("--splits", re_splits, "number of seeded splits")->capture_default_str();
    re->add_option("--test-fraction", re_test_fraction, "test fraction per split")
        ->capture_default_str();
    re->add_flag("--cross-validate", do_cv, "retrain per split instead of loading --ckpt");
    re->add_option("--cv-iters", cv_iters, "iterations per cross-validation split");
    re->add_option("--cv-batch", cv_batch, "batch size per cross-validation split");

    // generalize
    auto* ge = app.add_subcommand("generalize", "optimize test poses toward a reference")->fallthrough();
    std::string reference_path, test_path, ge_ckpt;
    int steps = 300, kernel = 5;
    double ge_lr = 0.1, threshold = 0.01;
    bool dump = false;
    ge->add_option("--reference", reference_path, "reference scene file")->required();
    ge->add_option("--test", test_path, "test scene file")->required();
    ge->add_option("--ckpt", ge_ckpt, "checkpoint path")->required();
    ge->add_option("--steps", steps, "max optimization steps")->capture_default_str();
    ge->add_option("--lr", ge_lr, "Adam learning rate")->capture_default_str();
    ge->add_option("--kernel", kernel, "backward kernel size (3, 5 or 7)")->capture_default_str();
    ge->add_option("--threshold", threshold, "early-stop distance")->capture_default_str();
    ge->add_flag("--dump-projections", dump, "write per-step depth-image PGMs");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks")->fallthrough();
    int instances = 20;
    bool elu_fault = false;
    gc->add_option("--instances", instances, "random instances per op")->capture_default_str();
    gc->add_flag("--inject-elu-fault", elu_fault, "test hook: corrupt the elu derivative");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        write_resolved_config(app, g.out_dir);
        if (gen->parsed())
            return cmd_gen_data(g, n_scenes, class_names, points, gen_splits, gen_test_fraction);
        if (tr->parsed()) return cmd_train(g, train_data, iters, batch, overfit, lr0, period);
        if (re->parsed())
            return cmd_retrieve(g, retrieve_data, ckpt_path, split_file, re_splits,
                                re_test_fraction, do_cv, cv_iters, cv_batch);
        if (ge->parsed())
            return cmd_generalize(g, reference_path, test_path, ge_ckpt, steps, ge_lr, kernel,
                                  threshold, dump);
        if (gc->parsed()) return cmd_gradcheck(g, instances, elu_fault);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
