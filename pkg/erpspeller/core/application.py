"""
Command-line application for erpspeller.
"""

import argparse
import glob
import json
import logging
import os
import sys

import numpy as np

from erpspeller.core import config
from erpspeller.core import analysis, blda, dsp, reports
from erpspeller.core.container import SessionContainer, load_model, load_session, save_model, save_session
from erpspeller.core.errors import SpellerError, ValidationError
from erpspeller.core.paradigm import build_flash_code, build_layout, calibrated_geometry, layout_to_dict, load_labels
from erpspeller.core.run_config import load_run_config
from erpspeller.core.session import (CohortResult, SessionResult, SubjectResult, evaluate_offline,
                                     offline_run_recording, recording_features, replay_online, run_cohort,
                                     run_offline, run_online, subject_profile, synthesize_online_recording)

logger = logging.getLogger(__name__)

PARADIGM_FLAGS = {"ms": "MS_P", "ls": "LS_P"}
RESULT_FILE = "result.json"


class UsageExitParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class SpellerApp:
    def __init__(self, args):
        self.args = args
        self.run_config = load_run_config(args.config)
        self.paradigm_id = PARADIGM_FLAGS[args.paradigm] if args.paradigm else self.run_config.paradigm_id
        self.out = args.out or "."
        self.labels = load_labels()

    def protocol(self, paradigm_id=None):
        return self.run_config.protocol(paradigm_id or self.paradigm_id)

    def seeds(self):
        if getattr(self.args, "seeds", None):
            first = self.args.seed if self.args.seed is not None else self.run_config.cohort["first_seed"]
            return list(range(first, first + self.args.seeds))
        if self.args.seed is not None:
            return [self.args.seed]
        return self.run_config.seeds()

    def single_seed(self):
        return self.args.seed if self.args.seed is not None else self.run_config.cohort["first_seed"]

    def container_meta(self, paradigm_id, profile):
        return {
            "paradigm_id": paradigm_id,
            "seed": profile.seed,
            "geometry": calibrated_geometry(paradigm_id).to_dict(),
            "protocol": self.protocol(paradigm_id).to_dict(),
            "profile": profile.to_dict(),
        }

    # Subcommands

    def synth(self):
        """Write session containers for every seed."""
        base = self.run_config.profile()
        spread = self.run_config.cohort["amplitude_spread"]
        flash_code = build_flash_code()
        for seed in self.seeds():
            profile, _ = subject_profile(base, seed, spread)
            protocol = self.protocol()
            if self.args.stage in ("offline", "both"):
                for run in range(protocol.offline.runs):
                    recording = offline_run_recording(profile, protocol, run, flash_code)
                    path = os.path.join(self.out, f"seed{seed}_{self.paradigm_id}_offline{run + 1}")
                    save_session(path, SessionContainer(recording, **self.container_meta(self.paradigm_id, profile)))
            if self.args.stage in ("online", "both"):
                recording = synthesize_online_recording(profile, protocol)
                path = os.path.join(self.out, f"seed{seed}_{self.paradigm_id}_online")
                save_session(path, SessionContainer(recording, **self.container_meta(self.paradigm_id, profile)))
        write_layout = os.path.join(self.out, f"layout_{self.paradigm_id}.json")
        reports.write_json(write_layout, layout_to_dict(build_layout(self.paradigm_id), flash_code))
        return 0

    def train(self):
        """Train a model from stored offline containers or a fresh synthetic calibration."""
        options = self.run_config.train_options()
        if self.args.input:
            recordings = [load_session(path).recording for path in self.args.input]
            parts = [recording_features(r) for r in recordings]
            X = np.vstack([p[0] for p in parts])
            y = np.concatenate([p[1] for p in parts])
            model = blda.train(X, y, **options)
        else:
            profile = self.run_config.profile(self.single_seed())
            offline = run_offline(profile, self.protocol(), **options)
            recordings, model = offline.recordings, offline.model
            evaluation = evaluate_offline(model, profile, self.protocol())
            reports.write_json(os.path.join(self.out, "offline_evaluation.json"), {
                "accuracy_by_trials": list(evaluation.accuracy_by_trials),
                "auc": evaluation.auc,
                "mean_target_score": evaluation.mean_target_score,
                "mean_nontarget_score": evaluation.mean_nontarget_score,
            })

        save_model(os.path.join(self.out, "model.json"), model)
        coeffs = dsp.design_bandpass()
        epochs = []
        for recording in recordings:
            filtered = dsp.analysis_filter(recording.data, coeffs)
            epochs.extend(dsp.baseline_correct(e) for e in dsp.extract_epochs(filtered, recording.events))
        averages = analysis.erp_averages(epochs)
        reports.write_csv(os.path.join(self.out, "erp_averages.csv"), reports.erp_frame(averages), "%.4f")
        print(f"trained on {len(epochs)} epochs: alpha={model.alpha:.4g} beta={model.beta:.4g} "
              f"iterations={model.n_iterations}")
        return 0

    def online(self):
        """Decode a stored recording, or run a simulated online session."""
        if not self.args.model:
            raise ValidationError("online needs --model")
        model = load_model(self.args.model)
        if self.args.input:
            stored = load_session(self.args.input[0])
            result = replay_online(model, stored.recording, self.protocol(stored.paradigm_id), stored.seed)
        else:
            profile = self.run_config.profile(self.single_seed())
            result = run_online(model, profile, self.protocol())
        self.write_session(os.path.join(self.out, "session"), result)
        print(f"{result.paradigm_id}: accuracy {result.accuracy_pct:.1f}% "
              f"trials {result.trials_total} bit rate {result.bit_rate:.1f} bits/min")
        return 0

    def cohort(self):
        """Full protocol for every seed and both paradigms, then the analyses."""
        cohort_settings = self.run_config.cohort
        workers = self.args.workers or cohort_settings["workers"]
        cohort = run_cohort(
            self.seeds(), self.run_config.profile(), self.protocol(),
            workers=workers,
            amplitude_spread=cohort_settings["amplitude_spread"],
            counterbalance=cohort_settings["counterbalance"],
            evaluate=cohort_settings["evaluate_offline"],
            train_options=self.run_config.train_options(),
        )
        for subject in cohort.subjects:
            for paradigm_id, result in subject.sessions.items():
                name = f"{reports.subject_label(subject.subject)}_{paradigm_id}"
                self.write_session(os.path.join(self.out, "sessions", name), result,
                                   subject_profile(self.run_config.profile(), subject.seed,
                                                   cohort_settings["amplitude_spread"])[0],
                                   subject)
        reports.write_json(os.path.join(self.out, "config.json"), self.run_config.to_dict())
        self.write_analysis(cohort)
        return 0

    def analyze(self):
        """Recompute the cohort reports from a cohort output directory."""
        source = self.args.input[0] if self.args.input else self.out
        if self.args.out is None:
            self.out = source
        result_files = sorted(glob.glob(os.path.join(source, "sessions", "*", RESULT_FILE)))
        if not result_files:
            raise ValidationError(f"no sessions/*/{RESULT_FILE} under {source}")
        by_subject, subject_info = {}, {}
        for path in result_files:
            directory = os.path.dirname(path)
            label, paradigm_id = os.path.basename(directory).split("_", 1)
            with open(path, "r", encoding="utf-8") as f:
                document = json.load(f)
            recording = load_session(directory).recording
            by_subject.setdefault(label, {})[paradigm_id] = SessionResult.from_dict(document, recording)
            if "subject" in document:
                if subject_info.setdefault(label, document["subject"]) != document["subject"]:
                    raise ValidationError(f"subject records of {label} disagree between sessions")

        subjects = []
        for label in sorted(by_subject, key=lambda s: int(s.lstrip("S"))):
            sessions = by_subject[label]
            if set(sessions) != {"MS_P", "LS_P"}:
                raise ValidationError(f"subject {label} lacks one of the paradigms: {sorted(sessions)}")
            subjects.append(self.rebuild_subject(label, sessions, subject_info.get(label)))
        self.write_analysis(CohortResult(subjects))
        return 0

    def rebuild_subject(self, label, sessions, info):
        index = int(label.lstrip("S")) - 1
        if info is None:
            logger.warning("No subject record for %s; assuming MS_P first and unit ERP scale", label)
            return SubjectResult(index, sessions["MS_P"].seed, ("MS_P", "LS_P"), 1.0, sessions)
        order = tuple(info.get("order", ()))
        if sorted(order) != ["LS_P", "MS_P"]:
            raise ValidationError(f"subject {label} has condition order {list(order)}")
        try:
            seed, scale = int(info["seed"]), float(info["amplitude_scale"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"subject record of {label} is malformed: {e}") from None
        return SubjectResult(index, seed, order, scale, sessions)

    def check_table2(self):
        tolerance = self.run_config.analysis["bit_rate_tolerance"]
        table = analysis.check_table2(tolerance=tolerance)
        print(reports.format_table2_check(table, tolerance))
        if self.args.out:
            reports.write_csv(os.path.join(self.out, "table2_check.csv"), table, "%.3f")
        return 0 if table["within_tolerance"].all() else 1

    # Output helpers

    def write_session(self, directory, result, profile=None, subject=None):
        if result.recording is not None:
            profile = profile or self.run_config.profile(result.seed)
            save_session(directory, SessionContainer(result.recording,
                                                     **self.container_meta(result.paradigm_id, profile)))
        document = result.to_dict()
        if subject is not None:
            document["subject"] = reports.subject_to_dict(subject)
        reports.write_json(os.path.join(directory, RESULT_FILE), document)
        reports.write_csv(os.path.join(directory, "blocks.csv"), reports.session_frame(result, self.labels))

    def write_analysis(self, cohort):
        settings = self.run_config.analysis
        split = settings["split_block"]
        reports.write_csv(os.path.join(self.out, "results.csv"), reports.results_frame(cohort))
        reports.write_csv(os.path.join(self.out, "subjects.csv"), reports.subjects_frame(cohort), "%.4f")

        halves, order, angles, fatigue = {}, {}, {}, {}
        for paradigm_id in ("MS_P", "LS_P"):
            results = cohort.results(paradigm_id)
            halves[paradigm_id] = reports.halves_to_dict(analysis.halves_comparison(
                results, split, settings["accuracy_threshold_pct"], settings["bit_rate_threshold"]))
            try:
                order[paradigm_id] = reports.order_to_dict(analysis.order_correlation(results))
                angles[paradigm_id] = reports.visual_angle_to_dict(
                    analysis.visual_angle_correlation(results, build_layout(paradigm_id)))
            except ValidationError as e:
                logger.warning("Skipping %s correlations: %s", paradigm_id, e)
            recordings = [r for r in cohort.recordings(paradigm_id) if r is not None]
            if len(recordings) >= 2:
                fatigue[paradigm_id] = reports.fatigue_to_dict(analysis.fatigue_report(recordings, split))

        comparison = {}
        if len(cohort.subjects) >= 2:
            comparison = reports.comparison_to_dict(
                analysis.paradigm_comparison(cohort.results("MS_P"), cohort.results("LS_P"), settings["lilliefors"]))
        reports.write_json(os.path.join(self.out, "halves.json"), halves)
        reports.write_json(os.path.join(self.out, "fatigue.json"), fatigue)
        reports.write_json(os.path.join(self.out, "stats.json"), {
            "paradigm_comparison": comparison,
            "order_correlation": order,
            "visual_angle_correlation": angles,
        })
        for paradigm_id in ("MS_P", "LS_P"):
            results = cohort.results(paradigm_id)
            mean = sum(r.accuracy_pct for r in results) / len(results)
            print(f"{paradigm_id}: mean accuracy {mean:.1f}% over {len(results)} subjects")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="subject seed (first seed for cohorts)")
    common.add_argument("--config", default=None, help="run configuration JSON (path or bundled name)")
    common.add_argument("--out", default=None, help="output directory (default: current directory)")
    common.add_argument("--paradigm", choices=sorted(PARADIGM_FLAGS), default=None, help="speller display")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = UsageExitParser(prog="erpspeller", description="Simulate and analyse ERP speller sessions.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=UsageExitParser)

    synth = commands.add_parser("synth", parents=[common], help="generate cohort recordings")
    synth.add_argument("--seeds", type=int, default=None, help="number of consecutive seeds")
    synth.add_argument("--stage", choices=("online", "offline", "both"), default="both")

    train = commands.add_parser("train", parents=[common], help="offline runs to model file")
    train.add_argument("--input", nargs="+", default=None, help="offline session containers")

    online = commands.add_parser("online", parents=[common], help="model + recording to session result")
    online.add_argument("--model", default=None, help="model JSON from train")
    online.add_argument("--input", nargs=1, default=None, help="session container to replay")

    cohort = commands.add_parser("cohort", parents=[common], help="full protocol for N seeds x both paradigms")
    cohort.add_argument("--seeds", type=int, default=None, help="number of subjects")
    cohort.add_argument("--workers", type=int, default=None, help="thread pool size")

    analyze = commands.add_parser("analyze", parents=[common], help="reports from a cohort directory")
    analyze.add_argument("--input", nargs=1, default=None, help="cohort output directory")

    commands.add_parser("check-table2", parents=[common], help="bit-rate reconstruction against the reference results table")
    return parser


def run_application(argv=None):
    """Run the erpspeller command line and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if (config.DEBUG or args.verbose) else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        app = SpellerApp(args)
        handler = {
            "synth": app.synth,
            "train": app.train,
            "online": app.online,
            "cohort": app.cohort,
            "analyze": app.analyze,
            "check-table2": app.check_table2,
        }[args.command]
        return handler()
    except ValidationError as e:
        logger.error("%s", e)
        return 1
    except SpellerError as e:
        logger.error("%s", e)
        return 2
    except Exception:
        logger.exception("%s failed", args.command)
        return 2
