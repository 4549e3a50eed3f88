#%% Importing libraries
import os
import time
import argparse
import numpy as np
import pandas as pd
from tqdm import tqdm
from SUBIM.engine import EmissionSchedule, SubscriptionEngine, run_stream
from SUBIM.influence import DecayParams
from SUBIM.oracle import NaiveMultiSieve
from SUBIM.data_gen import random_actions, random_profiles, random_subscriptions

SWEEPS = {
    'k': [5, 25, 50, 75, 100],
    'lam': [0.01, 0.05, 0.1, 0.3, 0.5],
    'subscriptions': [10, 50, 100, 200, 500],
}
DEFAULTS = {'k': 50, 'lam': 0.1, 'subscriptions': 100}


def make_engine(name, params, profiles, subscriptions, emit_every):
    schedule = EmissionSchedule(every=emit_every)
    if name == 'prefix':
        return SubscriptionEngine(params, profiles, subscriptions, schedule=schedule)
    return NaiveMultiSieve(params, profiles, subscriptions, schedule=schedule, eager=name == 'eager')


def run_experiment(sweep, engines, n_users=500, n_keywords=30, n_actions=20000, n_seeds=3, emit_every=1000):
    filename = f'{sweep}_throughput_results.pkl'
    os.makedirs('results', exist_ok=True)
    if os.path.isfile('results/' + filename):
        results_df = pd.read_pickle('results/' + filename)
    else:
        results_df = pd.DataFrame()

    for value in tqdm(SWEEPS[sweep], desc=sweep, total=len(SWEEPS[sweep])):
        setting = dict(DEFAULTS, **{sweep: value})
        for seed in tqdm(range(n_seeds), desc='Seed', total=n_seeds, leave=False):
            rng = np.random.default_rng(seed)
            profiles = random_profiles(rng, n_users, n_keywords)
            subscriptions = random_subscriptions(rng, profiles, setting['subscriptions'])
            actions = random_actions(rng, n_users, n_actions, max_step=1)

            results = []
            for name in engines:
                if len(results_df) > 0:
                    done = results_df[(results_df['value'] == value) & (results_df['seed'] == seed)
                                      & (results_df['engine'] == name)]
                    if len(done) > 0:
                        continue
                params = DecayParams(lam=setting['lam'], k=setting['k'])
                engine = make_engine(name, params, profiles, subscriptions, emit_every)
                start = time.perf_counter()
                records = run_stream(engine, actions)
                elapsed = time.perf_counter() - start
                result = {
                    'sweep': sweep,
                    'value': value,
                    'seed': seed,
                    'engine': name,
                    'elapsed': elapsed,
                    'throughput': n_actions / elapsed,
                    'mean_influence': np.mean([r.value for r in records]) if records else 0.0,
                }
                result.update(engine.stats.as_dict())
                results.append(result)
            results_df = pd.concat([results_df, pd.DataFrame(results)], ignore_index=True)
            results_df.to_pickle('results/' + filename)
    return results_df


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Throughput of the prefix engine against the reference engines')
    parser.add_argument('--sweep', default='k', choices=list(SWEEPS), help='parameter to sweep')
    parser.add_argument('--engines', default='prefix,naive', help='comma separated, among prefix, naive, eager')
    parser.add_argument('--actions', type=int, default=20000)
    parser.add_argument('--seeds', type=int, default=3)
    args = parser.parse_args()

    results_df = run_experiment(args.sweep, args.engines.split(','), n_actions=args.actions, n_seeds=args.seeds)
    print(results_df.groupby(['value', 'engine'])[['throughput', 'marginal_evaluations', 'rebases']].mean())
