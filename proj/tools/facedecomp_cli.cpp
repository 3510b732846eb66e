// facedecomp: command-line front end. Talks to the pipeline exclusively
// through the C API in facedecomp.h.
#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "facedecomp.h"

namespace {

bool g_quiet = false;

void say(const std::string& msg) {
    if (!g_quiet) std::printf("%s\n", msg.c_str());
}

int report(fd_status st) {
    if (st != FD_OK) std::fprintf(stderr, "error: %s\n", fd_last_error());
    return static_cast<int>(st);
}

struct ScopedString {
    char* s = nullptr;
    ~ScopedString() { fd_string_free(s); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Facial intrinsic decomposition pipeline"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    bool dry_run = false;
    app.add_option("--seed", seed, "Master seed for randomized commands");
    app.add_flag("--quiet", g_quiet, "Suppress informational output");
    app.add_flag("--dry-run", dry_run, "Print what would run (and the model trace) without writing");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a procedural dataset");
    std::string gen_out;
    int gen_n = 0, gen_res = 64;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n", gen_n, "Number of samples (>= 20)")->required();
    gen->add_option("--res", gen_res, "Sample resolution");

    // train
    auto* train = app.add_subcommand("train", "Train stage 12 (albedo) or stage 3 (translator)");
    int train_stage = 0;
    std::string train_data, train_config, train_init, train_out, train_log;
    train->add_option("--stage", train_stage, "12 or 3")->required();
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--config", train_config, "Run config file")->required();
    train->add_option("--init-from", train_init, "Stage 1-2 checkpoint (stage 3 only)");
    train->add_option("--out", train_out, "Output checkpoint")->required();
    train->add_option("--log", train_log, "Structured training log file");

    // decompose
    auto* dec = app.add_subcommand("decompose", "Decompose one image into rendering passes");
    std::string dec_ckpt, dec_input, dec_out;
    dec->add_option("--ckpt", dec_ckpt, "Checkpoint file")->required();
    dec->add_option("--input", dec_input, "Input image (PNG or NTF1)")->required();
    dec->add_option("--out", dec_out, "Output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Per-pass metric table on the test split");
    std::string ev_ckpt, ev_data;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
    ev->add_option("--data", ev_data, "Dataset directory")->required();

    // selfcheck
    auto* sc = app.add_subcommand("selfcheck", "Perturb-and-render stability report");
    std::string sc_ckpt, sc_data;
    int sc_jitter = 5;
    double sc_frac = 0.05;
    sc->add_option("--ckpt", sc_ckpt, "Checkpoint file")->required();
    sc->add_option("--data", sc_data, "Dataset directory")->required();
    sc->add_option("--jitter", sc_jitter, "Max spatial jitter in pixels");
    sc->add_option("--photometric", sc_frac, "Brightness/saturation jitter fraction");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::string gc_config;
    gc->add_option("--config", gc_config, "Run config file")->required();

    // rf
    auto* rf = app.add_subcommand("rf", "Print the stage-1 receptive field");
    std::string rf_config;
    rf->add_option("--config", rf_config, "Run config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit 0, bad usage exits 2
    }

    if (gen->parsed()) {
        if (dry_run) {
            say("would generate " + std::to_string(gen_n) + " samples at " +
                std::to_string(gen_res) + "px into " + gen_out);
            return 0;
        }
        return report(fd_gen_data(gen_out.c_str(), gen_n, gen_res, seed));
    }

    if (train->parsed()) {
        if (train_stage == 3 && train_init.empty()) {
            std::fprintf(stderr, "error: --stage 3 requires --init-from CKPT\n");
            std::fprintf(stderr, "usage: facedecomp train --stage 3 --init-from CKPT "
                                 "--data DIR --config FILE --out CKPT\n");
            return 2;
        }
        if (dry_run) {
            ScopedString trace;
            fd_status st = fd_trace(train_config.c_str(), &trace.s);
            if (st != FD_OK) return report(st);
            std::printf("%s", trace.s);
            return 0;
        }
        return report(fd_train(train_stage, train_data.c_str(), train_config.c_str(),
                               train_init.empty() ? nullptr : train_init.c_str(),
                               train_out.c_str(), train_log.empty() ? nullptr : train_log.c_str()));
    }

    if (dec->parsed() || ev->parsed() || sc->parsed()) {
        const std::string& ckpt = dec->parsed() ? dec_ckpt : ev->parsed() ? ev_ckpt : sc_ckpt;
        fd_session* session = nullptr;
        fd_status st = fd_session_open(ckpt.c_str(), &session);
        if (st != FD_OK) return report(st);
        int code = 0;
        if (dry_run) {
            say("session resolution: " + std::to_string(fd_session_resolution(session)));
            say(std::string("translator: ") +
                (fd_session_has_translator(session) ? "present" : "absent"));
            say("dry run: no outputs written");
        } else if (dec->parsed()) {
            code = report(fd_decompose(session, dec_input.c_str(), dec_out.c_str()));
            if (code == 0) say("wrote decomposition to " + dec_out);
        } else if (ev->parsed()) {
            ScopedString rep;
            code = report(fd_eval(session, ev_data.c_str(), &rep.s));
            if (code == 0) std::printf("%s", rep.s);
        } else {
            double results[3] = {0, 0, 0};
            code = report(fd_selfcheck(session, sc_data.c_str(), sc_jitter, sc_frac, seed,
                                       results));
            if (code == 0)
                std::printf("rmse=%.6f ssim=%.6f feature_dist=%.6f\n", results[0], results[1],
                            results[2]);
        }
        fd_session_close(session);
        return code;
    }

    if (gc->parsed()) {
        ScopedString rep;
        fd_status st = fd_gradcheck(gc_config.c_str(), &rep.s);
        if (rep.s && !g_quiet) std::printf("%s", rep.s);
        return report(st);
    }

    if (rf->parsed()) {
        int value = 0;
        fd_status st = fd_receptive_field(rf_config.c_str(), &value);
        if (st != FD_OK) return report(st);
        std::printf("%d\n", value);
        return 0;
    }

    return 2;
}
