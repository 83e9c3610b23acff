import numpy as np, time
from saclo.env import EnvConfig, QuadrupedEnv, obs_normalizer, priv_extra_normalizer
from saclo.ppo import PpoConfig, Trainer
from saclo.core import TaskMode, Command
from saclo.artifacts import save_policy

env_cfg = EnvConfig(episode_s=5.0)
ppo_cfg = PpoConfig(n_envs=32, horizon=48, iterations=400, epochs=4, minibatches=4,
                    learning_rate=5e-4, entropy_coef=0.002, policy_hidden=(128,128),
                    critic_hidden=(128,128), seed=2, curriculum_start=0.3,
                    curriculum_threshold=0.5, curriculum_step=0.1, curriculum_cooldown=25)
tr = Trainer(env_cfg, ppo_cfg, TaskMode.SAFE, phase="teacher", safe_stage=1)
def cb(r):
    if r['iteration'] % 50 == 0:
        print(f"it {r['iteration']:3d} rew {r['mean_reward']:+.3f} reach {r['tracking_perf']:.3f} curr {r['curriculum']:.2f}", flush=True)
t0=time.time(); art = tr.train(progress_cb=cb)
print(f"train {time.time()-t0:.1f}s", flush=True)
save_policy("/root/pkg/.scratch/teacher_safe1.ckpt", art.policy, {"task":"safe","phase":"teacher"})

# evaluate stage-1 reaching: random offsets <= 1 m, measure final remaining distance
off, sc = obs_normalizer(env_cfg); psc = priv_extra_normalizer()
rng = np.random.default_rng(0)
rem_final = []
for ep in range(20):
    env = QuadrupedEnv(EnvConfig(noise_enabled=False, episode_s=5.0), seed=100+ep)
    env.reset(curriculum=0.0)
    dx, dy = rng.uniform(-1, 1, 2)
    yaw = rng.uniform(-1.5, 1.5)
    env.set_command(Command(mode=TaskMode.SAFE, dx=dx, dy=dy, yaw_target=yaw))
    for i in range(250):
        xn = (env.observe_x() - off) * sc
        obs = np.concatenate([xn, env.priv_extras() * psc])
        r = env.step(art.policy.mean(obs[None,:])[0])
        if r.done: break
    rx, ry, yerr = env.safe_remaining()
    rem_final.append((np.hypot(rx, ry), abs(yerr)))
rem = np.array(rem_final)
print(f"mean remaining offset: {rem[:,0].mean():.3f} m (want < 0.2), mean |yaw err|: {rem[:,1].mean():.3f} rad", flush=True)
