// dreambox command-line entry point.

#include "dreambox/dataset.hpp"
#include "dreambox/error.hpp"
#include "dreambox/pipeline.hpp"
#include "dreambox/prompts.hpp"
#include "dreambox/shapes.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace dreambox;
namespace fs = std::filesystem;

int exit_code_for(const Error& e)
{
  if (e.code() == "transport_error" || e.code() == "contract_error")
    return 3;
  if (e.stage() == "synthesize")
    return 3;
  if (e.stage() == "train")
    return 4;
  if (e.stage() == "evaluate")
    return 5;
  return 2; // config, dataset and anything caught before work starts
}

void report_error(const std::string& stage, const std::string& code, const std::string& message)
{
  std::cerr << nlohmann::json{{"stage", stage}, {"code", code}, {"message", message}}.dump() << std::endl;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Object-level outlier synthesis by inpainting, with an energy-based OOD head"};
  app.require_subcommand(1);

  auto* prompts = app.add_subcommand("prompts", "List the generic prompt templates");
  bool raw = false;
  std::string render_class;
  prompts->add_flag("--raw", raw, "Print the template resource byte for byte");
  prompts->add_option("--render", render_class, "Substitute a class name into every template");

  auto* voc = app.add_subcommand("convert-voc", "Convert PASCAL VOC XML annotations to dataset JSON");
  std::string voc_root, voc_out;
  std::vector<std::string> voc_splits;
  voc->add_option("--root", voc_root, "Directory holding VOC2007/, VOC2012/")->required();
  voc->add_option("--split", voc_splits, "Split such as VOC2007/trainval (repeatable)")->required();
  voc->add_option("--out", voc_out, "Output annotation file")->required();

  auto* shapes = app.add_subcommand("make-shapes", "Write the synthetic shapes fixture");
  std::string shapes_out;
  ShapesOptions shape_opts;
  shapes->add_option("--out", shapes_out, "Output directory")->required();
  shapes->add_option("--train", shape_opts.train_images, "Training images")->capture_default_str();
  shapes->add_option("--test", shape_opts.test_images, "Held-out in-distribution images")->capture_default_str();
  shapes->add_option("--ood-test", shape_opts.ood_test_images, "OOD test images")->capture_default_str();
  shapes->add_option("--seed", shape_opts.seed, "Fixture seed")->capture_default_str();

  std::string config_path;
  auto* synth = app.add_subcommand("synthesize", "Inpaint sampled boxes into outlier images");
  auto* train = app.add_subcommand("train", "Train the detector and OOD head");
  auto* evaluate = app.add_subcommand("evaluate", "Compute FPR95, AUROC and mAP");
  auto* report = app.add_subcommand("report", "Write the run table, sigma plot and outlier grids");
  auto* run = app.add_subcommand("run", "synthesize, train, evaluate and report in one go");
  for (auto* sub : {synth, train, evaluate, report, run})
    sub->add_option("-c,--config", config_path, "Pipeline config (YAML)")->required();

  bool full_scale = false;
  std::string full_scale_out;
  train->add_flag("--full-scale", full_scale, "Emit the full-scale Faster R-CNN config instead of training");
  train->add_option("--full-scale-out", full_scale_out, "Where to write the full-scale config");
  std::string checkpoint;
  evaluate->add_option("--checkpoint", checkpoint, "Evaluate this checkpoint instead of the run's variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("cli", "usage_error", e.what());
    return 2;
  }

  try {
    if (*prompts) {
      if (raw) {
        std::cout << prompt_resource_text();
      } else {
        for (const auto& t : prompt_templates()) {
          if (render_class.empty())
            std::cout << t.index << '\t' << t.text << '\n';
          else
            std::cout << t.index << '\t' << *render_generic_prompt(t.index, render_class).text << '\n';
        }
      }
    } else if (*voc) {
      const auto d = convert_voc(voc_root, voc_splits);
      save_dataset(d, voc_out);
      std::cout << "wrote " << d.images().size() << " images, " << d.annotations().size() << " boxes to " << voc_out
                << '\n';
    } else if (*shapes) {
      const auto f = write_shapes_fixture(shapes_out, shape_opts);
      std::cout << "wrote " << f.train.string() << ", " << f.test.string() << ", " << f.ood_test.string() << '\n';
    } else {
      const auto config = load_config(config_path);
      if (*synth) {
        stage_synthesize(config, std::cout);
      } else if (*train) {
        if (full_scale) {
          const fs::path out =
            full_scale_out.empty() ? run_layout(config).root / "configs" / "full_scale.yaml" : fs::path(full_scale_out);
          fs::create_directories(out.parent_path());
          std::ofstream(out) << full_scale_config_yaml(config);
          std::cout << "wrote " << out.string() << " (not run: needs GPU infrastructure and the full datasets)\n";
        } else {
          stage_train(config, std::cout);
        }
      } else if (*evaluate) {
        stage_evaluate(config, std::cout, checkpoint.empty() ? std::nullopt : std::optional<fs::path>(checkpoint));
      } else if (*report) {
        stage_report(config, std::cout);
      } else if (*run) {
        stage_synthesize(config, std::cout);
        stage_train(config, std::cout);
        stage_evaluate(config, std::cout);
        stage_report(config, std::cout);
      }
    }
  } catch (const Error& e) {
    report_error(e.stage(), e.code(), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    report_error("internal", "unexpected_error", e.what());
    return 1;
  }
  return 0;
}
