#!/usr/bin/env python3
"""Generate a small synthetic English-like treebank in PTB bracketed format.

The grammar is a hand-written PCFG with POS preterminals, punctuation, number
tokens and a Zipfian lexicon, so few-shot experiments see unknown words at test
time. Output is deterministic for a given seed.

    python3 tools/make_sample_treebank.py --out data/sample --seed 13
"""

import argparse
import os
import random

LEX = {
    "DT": "the a this that every some no each another".split(),
    "NN": ("cat dog company market year price share investor report government bank week month "
           "plan deal stock rate group official analyst industry program quarter system trader "
           "fund client index board problem issue business president car house city child teacher "
           "student book letter story road river garden kitchen window door table chair computer "
           "phone network machine engine factory office budget contract agreement proposal law court "
           "judge lawyer doctor patient hospital school village farmer worker manager director chief "
           "partner customer supplier product service account payment loan debt profit loss sale "
           "demand supply trade policy tax reform election campaign vote party leader member "
           "committee council agency firm unit division brand team player coach game season match "
           "song film show audience artist writer editor newspaper magazine article").split(),
    "NNS": ("cats dogs companies markets years prices shares investors reports banks weeks months plans "
            "deals stocks rates groups officials analysts programs traders funds clients problems "
            "issues cars houses cities children teachers students books letters stories roads workers "
            "managers customers products services loans profits sales taxes leaders members teams "
            "players games songs films").split(),
    "NNP": ("John Mary Smith Jones Boston Chicago London Tokyo Ford IBM Sony Congress Texas Paris "
            "Peter Susan Brown Taylor Germany Japan Friday Monday October March").split(),
    "JJ": ("big small new old good bad high low strong weak large major early late recent public "
           "private federal local foreign national financial economic political social real hard "
           "easy quick slow long short young final main serious simple clear free full red green "
           "black white open close important difficult").split(),
    "VBD": ("said saw bought sold made took gave found told asked called reported announced expected "
            "raised cut received built opened closed started ended wanted needed liked helped moved "
            "paid won lost signed approved rejected visited left reached offered planned").split(),
    "VBDi": "fell rose slept arrived waited declined jumped collapsed laughed improved".split(),
    "VBZ": ("says sees buys sells makes takes gives finds tells owns needs wants likes helps runs "
            "expects reports holds").split(),
    "VB": ("buy sell make take give find tell see help build pay sign approve visit reach offer "
           "raise cut open close").split(),
    "MD": "will would could may might should can must".split(),
    "IN": "in on with of for from at by about under after before near into".split(),
    "INsub": "because although while since if".split(),
    "CC": "and or but".split(),
    "RB": "quickly very also never not recently still slowly already often".split(),
    "RBa": "very quite too rather".split(),
    "PRP": "he she it they we I you".split(),
    "WDT": "which that".split(),
}

# Zipf weights per tag.
WEIGHTS = {tag: [1.0 / (i + 1) ** 1.05 for i in range(len(words))] for tag, words in LEX.items()}

TAG_OUT = {"VBDi": "VBD", "INsub": "IN", "RBa": "RB"}


def word(rng, tag):
    w = rng.choices(LEX[tag], weights=WEIGHTS[tag])[0]
    return "(%s %s)" % (TAG_OUT.get(tag, tag), w)


def number(rng):
    kind = rng.random()
    if kind < 0.4:
        tok = str(rng.randint(2, 99))
    elif kind < 0.7:
        tok = "%d.%d" % (rng.randint(0, 99), rng.randint(0, 9))
    else:
        tok = "{:,}".format(rng.randint(1000, 99999))
    return "(CD %s)" % tok


def choose(rng, options):
    total = sum(p for p, _ in options)
    x = rng.random() * total
    for p, f in options:
        x -= p
        if x <= 0:
            return f()
    return options[-1][1]()


def np(rng, depth):
    deep = depth < 3
    opts = [
        (3.0, lambda: "(NP %s %s)" % (word(rng, "DT"), word(rng, "NN"))),
        (2.0, lambda: "(NP %s %s %s)" % (word(rng, "DT"), word(rng, "JJ"), word(rng, "NN"))),
        (1.0, lambda: "(NP %s)" % word(rng, "NNP")),
        (0.6, lambda: "(NP %s %s)" % (word(rng, "NNP"), word(rng, "NNP"))),
        (1.5, lambda: "(NP %s)" % word(rng, "PRP")),
        (1.0, lambda: "(NP %s %s)" % (word(rng, "JJ"), word(rng, "NNS"))),
        (0.8, lambda: "(NP %s)" % word(rng, "NNS")),
        (0.8, lambda: "(NP %s %s)" % (number(rng), word(rng, "NNS"))),
    ]
    if deep:
        opts += [
            (1.6, lambda: "(NP (NP %s %s) %s)" % (word(rng, "DT"), word(rng, "NN"), pp(rng, depth + 1))),
            (0.6, lambda: "(NP (NP %s %s) (SBAR (WHNP %s) (S %s)))"
             % (word(rng, "DT"), word(rng, "NN"), word(rng, "WDT"), vp(rng, depth + 1))),
            (0.5, lambda: "(NP %s %s %s)" % (np(rng, depth + 1), word(rng, "CC"), np(rng, depth + 1))),
        ]
    return choose(rng, opts)


def pp(rng, depth):
    return "(PP %s %s)" % (word(rng, "IN"), np(rng, depth + 1))


def adjp(rng):
    if rng.random() < 0.5:
        return "(ADJP %s %s)" % (word(rng, "RBa"), word(rng, "JJ"))
    return "(ADJP %s)" % word(rng, "JJ")


def vp(rng, depth):
    deep = depth < 3
    opts = [
        (3.0, lambda: "(VP %s %s)" % (word(rng, "VBD"), np(rng, depth + 1))),
        (1.0, lambda: "(VP %s)" % word(rng, "VBDi")),
        (1.0, lambda: "(VP %s %s)" % (word(rng, "VBDi"), word(rng, "RB"))),
        (1.2, lambda: "(VP %s %s)" % (word(rng, "VBZ"), np(rng, depth + 1))),
        (1.0, lambda: "(VP %s (VP %s %s))" % (word(rng, "MD"), word(rng, "VB"), np(rng, depth + 1))),
        (0.7, lambda: "(VP (VBD was) %s)" % adjp(rng)),
    ]
    if deep:
        opts += [
            (1.6, lambda: "(VP %s %s %s)" % (word(rng, "VBD"), np(rng, depth + 1), pp(rng, depth + 1))),
            (0.8, lambda: "(VP %s %s)" % (word(rng, "VBDi"), pp(rng, depth + 1))),
            (0.7, lambda: "(VP (VBD said) (SBAR (IN that) %s))" % clause(rng, depth + 1)),
        ]
    return choose(rng, opts)


def clause(rng, depth):
    return "(S %s %s)" % (np(rng, depth + 1), vp(rng, depth + 1))


def sentence(rng):
    r = rng.random()
    if r < 0.62:
        body = "%s %s" % (np(rng, 0), vp(rng, 0))
    elif r < 0.77:
        body = "%s (, ,) %s %s" % (pp(rng, 1), np(rng, 1), vp(rng, 1))
    elif r < 0.87:
        body = "(SBAR %s %s) (, ,) %s %s" % (word(rng, "INsub"), clause(rng, 2), np(rng, 1), vp(rng, 1))
    elif r < 0.95:
        body = "%s (, ,) %s %s" % (clause(rng, 1), word(rng, "CC"), clause(rng, 1))
    else:
        body = "(`` ``) %s (, ,) ('' '') %s (VP (VBD said))" % (clause(rng, 2), np(rng, 2))
    return "(ROOT (S %s (. .)))" % body


def leaves(tree):
    toks = tree.replace("(", " ( ").replace(")", " ) ").split()
    out = []
    for i, t in enumerate(toks):
        if t not in "()" and toks[i - 1] != "(":
            out.append(t)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/sample")
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--labeled", type=int, default=300)
    ap.add_argument("--pool", type=int, default=1200)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--max-length", type=int, default=40)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    trees = []
    while len(trees) < args.labeled + args.pool + args.test:
        t = sentence(rng)
        if 3 <= len(leaves(t)) <= args.max_length:
            trees.append(t)
    labeled = trees[: args.labeled]
    pool = trees[args.labeled: args.labeled + args.pool]
    test = trees[args.labeled + args.pool:]

    os.makedirs(args.out, exist_ok=True)

    def dump(name, lines):
        with open(os.path.join(args.out, name), "w") as f:
            for line in lines:
                f.write(line + "\n")

    dump("labeled.txt", labeled)
    dump("pool_gold.txt", pool)
    dump("pool.txt", [" ".join(leaves(t)) for t in pool])
    dump("test.txt", test)


if __name__ == "__main__":
    main()
