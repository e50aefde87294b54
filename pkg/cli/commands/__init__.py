from . import convert, degrade, reco, refine, simulate, stats, synth, train_clf, train_edge

COMMANDS = (stats, train_edge, refine, train_clf, degrade, simulate, reco, synth, convert)
