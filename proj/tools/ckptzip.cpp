// Command-line front end over the ckptzip C API.

#include <CLI11.hpp>

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ckptzip/ckptzip.h"

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kFormatError = 2, kOtherError = 3 };

int report_failure(ckz_status status, const std::string& what) {
  std::fprintf(stderr, "ckptzip: %s: %s (%s)\n", what.c_str(), ckz_last_error(), ckz_status_name(status));
  if (status == CKZ_ERR_VERIFICATION_FAILED) return kVerifyFailed;
  return ckz_is_format_error(status) ? kFormatError : kOtherError;
}

// --seed wins over CKPTZIP_SEED, which wins over the default.
std::optional<uint64_t> env_seed() {
  const char* text = std::getenv("CKPTZIP_SEED");
  if (!text || !*text) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text, &end, 10);
  if (errno != 0 || *end != '\0') {
    std::fprintf(stderr, "ckptzip: ignoring malformed CKPTZIP_SEED=%s\n", text);
    return std::nullopt;
  }
  return static_cast<uint64_t>(v);
}

uint64_t resolve_seed(const std::optional<uint64_t>& flag, uint64_t fallback) {
  if (flag) return *flag;
  if (auto env = env_seed()) return *env;
  return fallback;
}

struct Handles {
  ckz_checkpoint* ckpt = nullptr;
  ckz_encoder* enc = nullptr;
  ckz_decoder* dec = nullptr;
  ckz_container* container = nullptr;
  ~Handles() {
    ckz_checkpoint_free(ckpt);
    ckz_encoder_free(enc);
    ckz_decoder_free(dec);
    ckz_container_free(container);
  }
};

int cmd_compress(const std::vector<std::string>& inputs, const std::string& output, ckz_config config) {
  Handles h;
  ckz_status st = ckz_encoder_new(&config, &h.enc);
  if (st != CKZ_OK) return report_failure(st, "invalid configuration");
  for (const std::string& path : inputs) {
    st = ckz_checkpoint_load(path.c_str(), &h.ckpt);
    if (st != CKZ_OK) return report_failure(st, path);
    st = ckz_encoder_push(h.enc, h.ckpt);
    if (st != CKZ_OK) return report_failure(st, path);
    ckz_checkpoint_free(h.ckpt);
    h.ckpt = nullptr;
  }
  st = ckz_encoder_finish(h.enc, &h.container);
  if (st == CKZ_OK) st = ckz_container_save(h.container, output.c_str());
  if (st != CKZ_OK) return report_failure(st, output);

  uint64_t raw = 0, packed = 0;
  for (size_t i = 0; i < ckz_container_record_count(h.container); ++i) {
    ckz_record_stats s{};
    if (ckz_container_record_stats(h.container, i, &s) == CKZ_OK) {
      raw += s.raw_bytes;
      packed += s.compressed_bytes;
    }
  }
  std::printf("%zu checkpoints, %" PRIu64 " -> %" PRIu64 " bytes (%.2fx)\n", ckz_container_record_count(h.container),
              raw, packed, packed ? static_cast<double>(raw) / static_cast<double>(packed) : 0.0);
  return kOk;
}

int cmd_decompress(const std::string& input, const std::string& out_dir) {
  Handles h;
  ckz_status st = ckz_container_load(input.c_str(), &h.container);
  if (st != CKZ_OK) return report_failure(st, input);
  st = ckz_decoder_new(h.container, &h.dec);
  if (st != CKZ_OK) return report_failure(st, input);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::fprintf(stderr, "ckptzip: cannot create %s: %s\n", out_dir.c_str(), ec.message().c_str());
    return kOtherError;
  }
  size_t count = 0;
  while ((st = ckz_decoder_next(h.dec, &h.ckpt)) == CKZ_OK) {
    char name[64];
    std::snprintf(name, sizeof name, "step_%010" PRIu64 ".ckpt", ckz_checkpoint_step(h.ckpt));
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    const ckz_status saved = ckz_checkpoint_save(h.ckpt, path.c_str());
    ckz_checkpoint_free(h.ckpt);
    h.ckpt = nullptr;
    if (saved != CKZ_OK) return report_failure(saved, path);
    ++count;
  }
  if (st != CKZ_END) return report_failure(st, input);
  std::printf("wrote %zu checkpoints to %s\n", count, out_dir.c_str());
  return kOk;
}

int cmd_verify(const std::string& input) {
  Handles h;
  ckz_status st = ckz_container_load(input.c_str(), &h.container);
  if (st != CKZ_OK) return report_failure(st, input);
  ckz_verify_report report{};
  st = ckz_verify(h.container, &report);
  if (st == CKZ_OK) {
    std::printf("OK: %" PRIu64 " records verified\n", report.records);
    return kOk;
  }
  if (st == CKZ_ERR_VERIFICATION_FAILED) {
    std::printf("FAILED: %s\n", report.message);
    return kVerifyFailed;
  }
  return report_failure(st, input);
}

int cmd_stats(const std::string& input) {
  Handles h;
  ckz_status st = ckz_container_load(input.c_str(), &h.container);
  if (st != CKZ_OK) return report_failure(st, input);
  ckz_buffer csv{};
  st = ckz_container_stats_csv(h.container, &csv);
  if (st != CKZ_OK) return report_failure(st, input);
  std::fwrite(csv.data, 1, csv.size, stdout);
  ckz_buffer_free(&csv);
  return kOk;
}

int cmd_bench(const ckz_bench_options& options) {
  ckz_bench_result r{};
  const ckz_status st = ckz_bench(&options, &r);
  if (st != CKZ_OK) return report_failure(st, "bench");
  std::printf("checkpoints        %" PRIu64 "\n", r.checkpoints);
  std::printf("raw bytes          %" PRIu64 "\n", r.raw_bytes);
  std::printf("lstm bytes         %" PRIu64 " (%.2fx)\n", r.lstm_bytes,
              r.lstm_bytes ? static_cast<double>(r.raw_bytes) / static_cast<double>(r.lstm_bytes) : 0.0);
  std::printf("freq bytes         %" PRIu64 " (%.2fx)\n", r.freq_bytes,
              r.freq_bytes ? static_cast<double>(r.raw_bytes) / static_cast<double>(r.freq_bytes) : 0.0);
  std::printf("late payload       lstm %" PRIu64 " / freq %" PRIu64 "\n", r.lstm_late_payload_bytes,
              r.freq_late_payload_bytes);
  std::printf("final loss         baseline %.6f / resumed %.6f (delta %.4f)\n", r.baseline_loss, r.resumed_loss,
              r.relative_delta);
  if (options.csv_dir) std::printf("csv written to %s\n", options.csv_dir);
  return kOk;
}

int cmd_synth_train(const ckz_train_options& options, const std::string& out_dir) {
  size_t written = 0;
  const ckz_status st = ckz_synth_train(&options, out_dir.c_str(), &written);
  if (st != CKZ_OK) return report_failure(st, out_dir);
  std::printf("wrote %zu checkpoints to %s\n", written, out_dir.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ckptzip: lossy checkpoint compression with context-modelled entropy coding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ckz_version()));

  ckz_config config{};
  ckz_config_default(&config);
  std::optional<uint64_t> seed_flag;
  std::string model = "lstm";

  auto add_codec_options = [&](CLI::App* sub) {
    sub->add_option("--bits", config.bits, "bits per quantized symbol")
        ->check(CLI::IsMember(std::vector<int>{2, 3, 4, 5, 6, 7, 8}))
        ->capture_default_str();
    sub->add_option("--alpha", config.alpha, "weight pruning strength")->capture_default_str();
    sub->add_option("--beta", config.beta, "moment pruning strength")->capture_default_str();
    sub->add_option("--step", config.step_size, "reference distance in checkpoints")
        ->check(CLI::Range(1, 65535))
        ->capture_default_str();
    sub->add_option("--model", model, "probability model")
        ->check(CLI::IsMember({"lstm", "freq"}))
        ->capture_default_str();
    sub->add_option("--seed", seed_flag, "model and k-means seed (overrides CKPTZIP_SEED)");
    sub->add_option("--embed", config.embed, "LSTM embedding width")->capture_default_str();
    sub->add_option("--hidden", config.hidden, "LSTM hidden width")->capture_default_str();
    sub->add_option("--batch", config.batch, "symbols per model update")->capture_default_str();
  };

  std::vector<std::string> inputs;
  std::string output;
  auto* compress = app.add_subcommand("compress", "compress a series of CKPT files into a CKZ1 container");
  compress->add_option("inputs", inputs, "checkpoint files in step order")->required()->check(CLI::ExistingFile);
  compress->add_option("-o,--output", output, "output container")->required();
  add_codec_options(compress);

  std::string container_path;
  std::string out_dir;
  auto* decompress = app.add_subcommand("decompress", "decode a container into CKPT files");
  decompress->add_option("container", container_path)->required();
  decompress->add_option("-o,--output", out_dir, "output directory")->required();

  auto* verify = app.add_subcommand("verify", "check checksums, lossless round trip and state digests");
  verify->add_option("container", container_path)->required();

  auto* stats = app.add_subcommand("stats", "print per-record size statistics as CSV");
  stats->add_option("container", container_path)->required();

  ckz_train_options train{};
  ckz_train_options_default(&train);
  std::optional<uint64_t> train_seed;

  ckz_bench_options bench_opts{};
  bench_opts.break_every = 500;
  std::string csv_dir;
  auto* bench = app.add_subcommand("bench", "toy training run: compression sizes and the resume experiment");
  bench->add_option("--toy-steps", train.steps, "training steps")->capture_default_str();
  bench->add_option("--ckpt-every", train.checkpoint_every, "checkpoint interval in steps")->capture_default_str();
  bench->add_option("--break-every", bench_opts.break_every, "resume interval in steps")->capture_default_str();
  bench->add_option("--csv", csv_dir, "directory for loss.csv and sizes CSVs");
  add_codec_options(bench);

  auto* synth = app.add_subcommand("synth-train", "write the toy training run as CKPT files");
  synth->add_option("--steps", train.steps, "training steps")->capture_default_str();
  synth->add_option("--ckpt-every", train.checkpoint_every, "checkpoint interval in steps")->capture_default_str();
  synth->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  synth->add_option("--seed", train_seed, "training seed (overrides CKPTZIP_SEED)");
  synth->add_option("-o,--output", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kOtherError;
  }

  config.model_kind = model == "freq" ? CKZ_MODEL_FREQUENCY : CKZ_MODEL_LSTM;
  config.seed = resolve_seed(seed_flag, config.seed);

  if (*compress) return cmd_compress(inputs, output, config);
  if (*decompress) return cmd_decompress(container_path, out_dir);
  if (*verify) return cmd_verify(container_path);
  if (*stats) return cmd_stats(container_path);
  if (*bench) {
    train.seed = resolve_seed(seed_flag, train.seed);
    bench_opts.train = train;
    bench_opts.codec = config;
    bench_opts.csv_dir = csv_dir.empty() ? nullptr : csv_dir.c_str();
    return cmd_bench(bench_opts);
  }
  if (*synth) {
    train.seed = resolve_seed(train_seed, train.seed);
    return cmd_synth_train(train, out_dir);
  }
  return kOtherError;
}
