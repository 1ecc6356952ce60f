// SPDX-License-Identifier: Apache-2.0
// mimt: synthetic data, training, decoding and analysis for multi-domain
// translation models.
#include <iostream>

#include "CLI11.hpp"
#include "mimt/cli/commands.hpp"

using namespace mimt;
using namespace mimt::cli;

namespace {

void add_decode_flags(CLI::App* cmd, model::DecodeConfig& d) {
  cmd->add_option("--beam", d.beam, "Beam size (1 = greedy)")->capture_default_str();
  cmd->add_option("--max-length", d.max_length, "Maximum output tokens")->capture_default_str();
  cmd->add_option("--length-penalty", d.length_penalty, "Length normalization exponent")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain translation with mutual-information-weighted adapters"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic train/dev/test corpus and its manifest");
  gen_cmd->add_option("--spec", gen.spec_path, "Synthetic spec JSON (default spec when omitted)")->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Corpus seed")->capture_default_str();
  gen_cmd->add_option("--ladder-per-domain", gen.ladder_per_domain,
                      "Also write ladder.tsv with this many sentences per domain whose ambiguous-term count rises");
  gen_cmd->add_option("--ladder-length", gen.ladder_length, "Sentence length of the ladder set")->capture_default_str();

  TrainOptions train;
  std::uint64_t train_seed = 0;
  std::size_t train_jobs = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one model per seed from an experiment config");
  train_cmd->add_option("--config", train.config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Run only this seed");
  train_cmd->add_option("--out", train.out_dir, "Output directory (overrides output_dir)");
  auto* jobs_opt = train_cmd->add_option("--jobs", train_jobs, "Seeds trained in parallel");
  train_cmd->add_flag("--resume", train.seed_options.resume, "Continue from seed-*/checkpoints/state.ckpt");
  train_cmd->add_option("--stop-after", train.seed_options.stop_after, "Stop each seed after this many steps");

  TranslateOptions tr;
  auto* tr_cmd = app.add_subcommand("translate", "Translate source lines or a TSV file");
  tr_cmd->add_option("--checkpoint", tr.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--input", tr.input, "Input file: plain source lines or domain<TAB>source[<TAB>target]; - for stdin")
      ->capture_default_str();
  tr_cmd->add_option("--output", tr.output, "Output file; - for stdout")->capture_default_str();
  tr_cmd->add_option("--domain", tr.domain, "Domain of every input line");
  add_decode_flags(tr_cmd, tr.decode);
  tr_cmd->add_option("--xmi-sidecar", tr.xmi_sidecar, "Write per-token XMI of the outputs to this TSV");
  tr_cmd->add_option("--mixed", tr.mixed_checkpoint, "Mixed model used as p_G for the sidecar")->check(CLI::ExistingFile);

  EvaluateOptions ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "BLEU and chrF per domain on a TSV test set");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--test", ev.test, "Test TSV")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--hypotheses", ev.hypotheses, "Score these outputs instead of decoding")->check(CLI::ExistingFile);
  ev_cmd->add_option("--out", ev.out_dir, "Output directory")->required();
  add_decode_flags(ev_cmd, ev.decode);

  XmiHistOptions xh;
  auto* xh_cmd = app.add_subcommand("xmi-hist", "Histogram of teacher-forced token XMI on a test set");
  xh_cmd->add_option("--checkpoint", xh.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  xh_cmd->add_option("--test", xh.test, "Test TSV")->required()->check(CLI::ExistingFile);
  xh_cmd->add_option("--mixed", xh.mixed_checkpoint, "Mixed model used as p_G (default: the general adapter)")
      ->check(CLI::ExistingFile);
  xh_cmd->add_option("--variant", xh.variant, "difference or log-ratio")->capture_default_str();
  xh_cmd->add_option("--bins", xh.bins, "Number of bins")->capture_default_str();
  xh_cmd->add_option("--out", xh.out_dir, "Output directory")->required();

  QuartileOptions qo;
  auto* q_cmd = app.add_subcommand("quartiles", "BLEU deltas of two systems per TF-IDF keyword quartile");
  q_cmd->add_option("--train", qo.train, "Training TSV for keyword extraction")->required()->check(CLI::ExistingFile);
  q_cmd->add_option("--test", qo.test, "Test TSV")->required()->check(CLI::ExistingFile);
  q_cmd->add_option("--hyp-a", qo.hyp_a, "Outputs of system A, one line per test sentence")->required()->check(CLI::ExistingFile);
  q_cmd->add_option("--hyp-b", qo.hyp_b, "Outputs of system B")->required()->check(CLI::ExistingFile);
  q_cmd->add_option("--top-fraction", qo.top_fraction, "Fraction of each domain's vocabulary kept as keywords")
      ->capture_default_str();
  q_cmd->add_option("--stoplist", qo.stoplist, "Whitespace-separated tokens to ignore")->check(CLI::ExistingFile);
  q_cmd->add_flag("--raw-tf", qo.raw_tf, "Use raw counts as term frequency");
  q_cmd->add_option("--out", qo.out_dir, "Output directory")->required();

  HeatmapOptions hm;
  auto* hm_cmd = app.add_subcommand("heatmap", "Token-level XMI heatmap of references or outputs");
  hm_cmd->add_option("--checkpoint", hm.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  hm_cmd->add_option("--test", hm.test, "Test TSV")->required()->check(CLI::ExistingFile);
  hm_cmd->add_option("--mixed", hm.mixed_checkpoint, "Mixed model used as p_G")->check(CLI::ExistingFile);
  hm_cmd->add_option("--hypotheses", hm.hypotheses, "Color these outputs instead of the references")
      ->check(CLI::ExistingFile);
  hm_cmd->add_option("--limit", hm.limit, "Sentences shown (0 = all)")->capture_default_str();
  hm_cmd->add_option("--out", hm.out, "HTML file; prints ANSI colors to stdout when omitted");

  ReportOptions rp;
  auto* rp_cmd = app.add_subcommand("report", "Compare experiment directories that share a test set");
  rp_cmd->add_option("runs", rp.runs, "Experiment directories; the first is the quartile baseline")->required();
  rp_cmd->add_option("--out", rp.out_dir, "Output directory")->required();
  rp_cmd->add_option("--top-fraction", rp.top_fraction, "Keyword fraction for quartiles")->capture_default_str();
  rp_cmd->add_option("--heatmap-limit", rp.heatmap_limit, "Sentences per heatmap")->capture_default_str();

  SweepOptions sw;
  std::uint64_t sweep_seed = 0;
  auto* sw_cmd = app.add_subcommand("sweep", "Train once per lambda (both auxiliary weights) and pick by dev BLEU");
  sw_cmd->add_option("--config", sw.config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sw_cmd->add_option("--lambdas", sw.lambdas, "Values to try")->delimiter(',')->capture_default_str();
  auto* sweep_seed_opt = sw_cmd->add_option("--seed", sweep_seed, "Run only this seed");
  sw_cmd->add_option("--out", sw.out_dir, "Output directory (default <output_dir>/sweep)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) {
      if (*seed_opt) train.seed = train_seed;
      if (*jobs_opt) train.jobs = train_jobs;
      return cmd_train(train);
    }
    if (*tr_cmd) return cmd_translate(tr);
    if (*ev_cmd) return cmd_evaluate(ev);
    if (*xh_cmd) return cmd_xmi_hist(xh);
    if (*q_cmd) return cmd_quartiles(qo);
    if (*hm_cmd) return cmd_heatmap(hm);
    if (*rp_cmd) return cmd_report(rp);
    if (*sw_cmd) {
      if (*sweep_seed_opt) sw.seed = sweep_seed;
      return cmd_sweep(sw);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return DataError("").exit_code();
  }
  return 0;
}
