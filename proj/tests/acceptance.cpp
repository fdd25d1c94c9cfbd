// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.
// argv[1] must point at the spatial CLI binary (used by the determinism check).

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "spatial/dataset.hpp"
#include "spatial/gradcheck.hpp"
#include "spatial/network.hpp"
#include "spatial/pose_opt.hpp"
#include "spatial/projection.hpp"
#include "spatial/training.hpp"

using namespace spatial;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool pass, const std::string& detail) {
    std::printf("criterion %d (%s): %s%s%s\n", criterion, what.c_str(),
                pass ? "PASS" : "FAIL", detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

// ---- criterion 1: per-op and composed gradient checks ----

void criterion_gradients() {
    double t0 = cpu_seconds();
    std::vector<GradCheckReport> reports = run_gradient_checks(42, 20);
    bool all = !reports.empty();
    std::ostringstream detail;
    for (const GradCheckReport& r : reports) {
        if (!r.pass) {
            all = false;
            detail << r.op << " rel_err " << r.max_rel_err << "; ";
        }
    }
    detail << reports.size() << " ops checked, cpu " << (cpu_seconds() - t0) << "s";
    report(1, "gradient correctness", all, detail.str());
}

// ---- criterion 2: projection vs brute-force renderer ----

void criterion_projection_oracle() {
    Rng rng(7);
    std::uniform_real_distribution<double> coord(0.0, 1.0);
    std::uniform_int_distribution<int> npts(1, 25);
    bool all = true;
    for (int trial = 0; trial < 100 && all; ++trial) {
        std::array<std::vector<Vec3>, 2> pts;
        for (int ch = 0; ch < 2; ++ch) {
            int n = npts(rng);
            for (int i = 0; i < n; ++i)
                pts[static_cast<std::size_t>(ch)].push_back(
                    {coord(rng), coord(rng), coord(rng)});
        }
        ProjectionResult fast = project_points(pts, 32);
        ProjectionResult slow = testhelpers::brute_force_project(pts, 32);
        for (int pl = 0; pl < 3 && all; ++pl)
            for (int ch = 0; ch < 2 && all; ++ch)
                if (fast.images.planes[static_cast<std::size_t>(pl)][static_cast<std::size_t>(ch)] !=
                    slow.images.planes[static_cast<std::size_t>(pl)][static_cast<std::size_t>(ch)])
                    all = false;
    }
    report(2, "projection matches brute-force renderer", all,
           "100 scenes, 3 planes x 2 channels, bit-identical");
}

// ---- criterion 3: Sobel-backward descent direction ----

void criterion_descent_direction() {
    double rate = testhelpers::direction_success_rate(123, 100, 32, 5);
    std::ostringstream d;
    d << "success rate " << rate << " over 100 planted shifts";
    report(3, "backward projection descent direction", rate >= 0.90, d.str());
}

// ---- criterion 4: loss identities ----

void criterion_loss_identities() {
    auto vec = [](double x, double y) {
        Tensor t({2});
        t.data = {x, y};
        return t;
    };
    Tensor anchor = vec(0, 0);
    bool ok = true;
    ok = ok && triplet_loss(anchor, vec(0, 0), vec(1, 0)).loss == 0.0;
    ok = ok && triplet_loss(anchor, vec(1, 0), vec(0, 0)).loss == 1.0;
    ok = ok && triplet_loss(anchor, vec(0.5, 0), vec(0, 0.5)).loss == 0.25;
    TripletLossResult hinge = triplet_loss(anchor, vec(0.2, 0), vec(1.5, 0));
    for (double g : hinge.grad_neg) ok = ok && g == 0.0;
    report(4, "triplet loss hand values and hinge gradient", ok,
           "(0,1)->0, (1,0)->1, (0.5,0.5)->0.25, zero grad at d_minus >= 1");
}

// ---- criterion 5: desk-scale retrieval ----

TrainConfig desk_train_config() {
    TrainConfig cfg;
    cfg.iterations = 900;
    cfg.batch_triplets = 4;
    cfg.seed = 5;
    return cfg;
}

Dataset desk_dataset() {
    Rng trng(11);
    std::vector<ObjectTemplate> templates = default_template_set(trng, 256);
    return generate_dataset(160, all_relation_classes(), templates, 11);
}

void criterion_retrieval(const Dataset& ds) {
    double t0 = cpu_seconds();
    CrossValidationResult cv =
        cross_validate(ds.scenes, ds.labels, 5, 0.2, desk_train_config(), ArchitectureConfig::desk());
    std::ostringstream d;
    d << "acc_3of5 " << cv.mean_3of5 << " +/- " << cv.std_3of5 << ", acc_5of5 "
      << cv.mean_5of5 << " +/- " << cv.std_5of5 << ", 5 splits, cpu "
      << (cpu_seconds() - t0) << "s";
    report(5, "retrieval accuracy at desk scale", cv.mean_3of5 >= 0.80, d.str());
}

// ---- criterion 6: generalization identity ----

Scene bench_scene(Rng& rng) {
    std::uniform_real_distribution<double> u(-0.04, 0.04);
    Scene s;
    s.id = "bench";
    s.object_a_id = "a";
    s.object_b_id = "b";
    for (int i = 0; i < 12; ++i) {
        s.cloud_a.points.push_back({u(rng), u(rng), u(rng)});
        s.cloud_b.points.push_back({u(rng), u(rng), u(rng)});
    }
    s.pose_a.t = {0.0, 0.0, 0.15};
    s.pose_b.t = {0.08, 0.04, 0.05};
    return s;
}

void criterion_identity(const MetricNet& net) {
    Rng rng(31);
    Scene s = bench_scene(rng);
    GeneralizationConfig cfg;
    GeneralizationResult res = generalize(s, s, net, cfg);
    bool ok = res.initial_distance == 0.0 && res.final_distance == 0.0 &&
              res.final_scene.pose_a.t.x == s.pose_a.t.x &&
              res.final_scene.pose_a.q.w == s.pose_a.q.w &&
              res.final_scene.pose_b.t.z == s.pose_b.t.z;
    report(6, "generalization identity case", ok, "d_init = d_final = 0, poses unchanged");
}

// ---- criterion 7: pose-recovery benchmark ----

Scene perturb_poses(const Scene& s, Rng& rng, double noise_t, double noise_deg) {
    std::normal_distribution<double> tn(0.0, noise_t);
    Scene out = s;
    for (Pose* pose : {&out.pose_a, &out.pose_b}) {
        pose->t += Vec3{tn(rng), tn(rng), tn(rng)};
        double phi = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
        double cosu = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        double sinu = std::sqrt(std::max(0.0, 1.0 - cosu * cosu));
        Vec3 axis{sinu * std::cos(phi), sinu * std::sin(phi), cosu};
        double ang = std::uniform_real_distribution<double>(0.0, noise_deg * M_PI / 180.0)(rng);
        pose->q = (Quat::from_axis_angle(axis, ang) * pose->q).normalized();
    }
    return out;
}

void criterion_pose_recovery(const Dataset& ds, const MetricNet& net) {
    double t0 = cpu_seconds();
    int improved = 0, converged = 0;
    const int runs = 50;
    for (int r = 0; r < runs; ++r) {
        const Scene& ref = ds.scenes[static_cast<std::size_t>(r) % ds.scenes.size()];
        Rng rng(700 + static_cast<std::uint64_t>(r));
        Scene test = perturb_poses(ref, rng, 0.005, 2.0);
        GeneralizationConfig cfg;
        cfg.max_steps = 300;
        cfg.seed = 800 + static_cast<std::uint64_t>(r);
        GeneralizationResult res = generalize(ref, test, net, cfg);
        if (res.final_distance < res.initial_distance || res.final_distance == 0.0) ++improved;
        if (res.final_distance < 0.1) ++converged;
    }
    std::ostringstream d;
    d << improved << "/50 improved, " << converged << "/50 below 0.1, cpu "
      << (cpu_seconds() - t0) << "s";
    report(7, "pose-recovery benchmark", improved >= 45 && converged >= 35, d.str());
}

// ---- criterion 8: schedule and optimizer conformance ----

void criterion_schedule_optimizers() {
    bool ok = true;
    LrSchedule sch;
    ok = ok && std::abs(lr_at(sch, 0) - 0.001) < 1e-15;
    ok = ok && std::abs(lr_at(sch, 1500) - 0.001) < 1e-15;

    // SGD-momentum against a hand recurrence.
    {
        SgdMomentumState s;
        std::vector<double> p = {0.0};
        double v = 0.0, ref = 0.0;
        for (int t = 0; t < 10; ++t) {
            sgd_momentum_step(p, {1.0}, s, 0.1);
            v = 0.9 * v - 0.1;
            ref += v;
            ok = ok && std::abs(p[0] - ref) < 1e-12;
        }
    }
    // Adam against a hand recurrence.
    {
        AdamState s;
        s.lr = 0.1;
        std::vector<double> p = {1.0};
        double m = 0.0, v = 0.0, ref = 1.0;
        for (int t = 1; t <= 10; ++t) {
            adam_step(p, {0.5}, s);
            m = 0.9 * m + 0.1 * 0.5;
            v = 0.999 * v + 0.001 * 0.25;
            double mhat = m / (1.0 - std::pow(0.9, t));
            double vhat = v / (1.0 - std::pow(0.999, t));
            ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
            ok = ok && std::abs(p[0] - ref) < 1e-12;
        }
    }
    report(8, "schedule and optimizer conformance", ok,
           "lr_at(0)=lr_at(1500)=0.001; SGD and Adam match 10-step unrolls");
}

// ---- criterion 9: CLI determinism ----

int run_cli(const std::string& cli, const std::string& args) {
    std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

void criterion_cli_determinism(const std::string& cli) {
    const std::string base = "acceptance_cli_tmp";
    if (std::system(("rm -rf " + base).c_str()) != 0) {}

    bool ok = true;
    std::ostringstream detail;

    // gen-data twice with identical flags.
    for (const std::string& d : {base + "/g1", base + "/g2"})
        ok = ok && run_cli(cli, "gen-data --scenes 16 --seed 4 --out-dir " + d) == 0;
    if (ok) {
        std::string c1 = read_file(base + "/g1/labels.txt");
        std::string c2 = read_file(base + "/g2/labels.txt");
        ok = !c1.empty() && c1 == c2;
        Dataset d1 = load_dataset(base + "/g1");
        for (const Scene& s : d1.scenes) {
            std::string f1 = read_file(base + "/g1/scenes/" + s.id + ".scene");
            std::string f2 = read_file(base + "/g2/scenes/" + s.id + ".scene");
            ok = ok && !f1.empty() && f1 == f2;
        }
        if (!ok) detail << "gen-data outputs differ; ";
    } else {
        detail << "gen-data invocation failed; ";
    }

    // train twice with identical flags on the generated data.
    if (ok) {
        for (const std::string& d : {base + "/t1", base + "/t2"})
            ok = ok && run_cli(cli, "train --data " + base + "/g1 --iters 3 --batch 2 --seed 6 --out-dir " + d) == 0;
        if (ok) {
            ok = read_file(base + "/t1/checkpoint.bin") == read_file(base + "/t2/checkpoint.bin") &&
                 read_file(base + "/t1/train_log.csv") == read_file(base + "/t2/train_log.csv") &&
                 !read_file(base + "/t1/checkpoint.bin").empty();
            if (!ok) detail << "train outputs differ; ";
        } else {
            detail << "train invocation failed; ";
        }
    }

    // generalize twice with identical flags.
    if (ok) {
        Dataset d1 = load_dataset(base + "/g1");
        std::string ref = base + "/g1/scenes/" + d1.scenes[0].id + ".scene";
        std::string test = base + "/g1/scenes/" + d1.scenes[1].id + ".scene";
        for (const std::string& d : {base + "/o1", base + "/o2"})
            ok = ok && run_cli(cli, "generalize --reference " + ref + " --test " + test +
                                        " --ckpt " + base + "/t1/checkpoint.bin --steps 5 --seed 8 --out-dir " + d) == 0;
        if (ok) {
            ok = read_file(base + "/o1/trace.csv") == read_file(base + "/o2/trace.csv") &&
                 read_file(base + "/o1/generalized.scene") == read_file(base + "/o2/generalized.scene") &&
                 !read_file(base + "/o1/trace.csv").empty();
            if (!ok) detail << "generalize outputs differ; ";
        } else {
            detail << "generalize invocation failed; ";
        }
    }

    if (std::system(("rm -rf " + base).c_str()) != 0) {}
    report(9, "CLI determinism", ok,
           ok ? "gen-data, train, generalize byte-identical across repeats" : detail.str());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-spatial-cli>\n");
        return 2;
    }
    const std::string cli = argv[1];

    criterion_gradients();
    criterion_projection_oracle();
    criterion_descent_direction();
    criterion_loss_identities();

    Dataset ds = desk_dataset();
    criterion_retrieval(ds);

    // One network trained on the full dataset backs criteria 6 and 7.
    MetricNet net(ArchitectureConfig::desk());
    Rng init(5);
    net.init_params(init);
    train(ds.scenes, ds.labels, desk_train_config(), net);

    criterion_identity(net);
    criterion_pose_recovery(ds, net);
    criterion_schedule_optimizers();
    criterion_cli_determinism(cli);

    if (g_failures == 0) {
        std::printf("all 9 criteria PASS\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", g_failures);
    return 1;
}
