import numpy as np, time, math
from saclo.env import EnvConfig
from saclo.ppo import PpoConfig, Trainer
from saclo.core import TaskMode
from saclo.artifacts import save_policy

env_cfg = EnvConfig(episode_s=6.0)
ppo_cfg = PpoConfig(n_envs=64, horizon=48, iterations=700, epochs=4, minibatches=4,
                    learning_rate=5e-4, entropy_coef=0.002, policy_hidden=(128,128),
                    critic_hidden=(128,128), seed=1, curriculum_start=0.3,
                    curriculum_threshold=0.45, curriculum_step=0.1)
tr = Trainer(env_cfg, ppo_cfg, TaskMode.COMPLIANT, phase="teacher")
def cb(r):
    if r['iteration'] % 50 == 0:
        print(f"it {r['iteration']:3d} rew {r['mean_reward']:+.3f} track {r['tracking_perf']:.3f} curr {r['curriculum']:.2f}", flush=True)
t0=time.time(); art = tr.train(progress_cb=cb); print(f"train {time.time()-t0:.1f}s, curriculum {art.curriculum}")
save_policy("/root/pkg/.scratch/teacher_comply.ckpt", art.policy,
            {"task":"compliant","phase":"teacher"})
np.save("/root/pkg/.scratch/teacher_comply_critic.npy", art.critic_params)

from saclo.env import QuadrupedEnv, DisturbanceSchedule, DisturbanceEvent, obs_normalizer, priv_extra_normalizer
from saclo.core import Command
off, sc = obs_normalizer(env_cfg); psc = priv_extra_normalizer()
def trace(k, T=20.0):
    cfg2 = EnvConfig(noise_enabled=False, episode_s=T)
    env = QuadrupedEnv(cfg2, seed=7)
    env.reset(curriculum=0.0)
    env.set_command(Command(mode=TaskMode.COMPLIANT, vx=0.5, k=k))
    evs = [DisturbanceEvent(t*0.02, 0.02, np.array([0.0, 100.0*math.sin(0.5*t*0.02), 0.0]), np.zeros(3)) for t in range(int(T*50))]
    env.schedule = DisturbanceSchedule(evs)
    vy, fy, vx = [], [], []
    for i in range(int(T*50)):
        xn = (env.observe_x() - off) * sc
        obs = np.concatenate([xn, env.priv_extras() * psc])
        r = env.step(art.policy.mean(obs[None,:])[0])
        v = env.base_vel_body()
        vy.append(v[1]); vx.append(v[0]); fy.append(env.ext_force_body()[1])
        if r.failed: print("FAILED in trace"); break
    vy, fy = np.array(vy), np.array(fy)
    print(f"k={k}: mean|vy|={np.mean(np.abs(vy)):.3f} corr={np.corrcoef(vy,fy)[0,1]:.3f} vx={np.mean(vx):.3f}", flush=True)
    return np.mean(np.abs(vy))
m0 = trace(0.0); m1 = trace(0.01); m2 = trace(0.02)
print("ordering strict:", m0 < m1 < m2)
