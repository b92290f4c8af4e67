use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{AdamState, AlbedoNet, EncodingSpec, MlpArch, MlpParams, ShadowNet, SkinNet};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"VNCS";
pub const CHECKPOINT_VERSION: u32 = 1;

/// The three networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub skin: SkinNet,
    pub albedo: AlbedoNet,
    pub shadow: ShadowNet,
}

/// Networks, optional optimizer state and where in the schedule they were
/// saved. Stage 0 is the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<[AdamState; 3]>,
    pub stage: u8,
    pub iteration: u64,
    pub config_hash: [u8; 32],
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::Checkpoint(format!("truncated file ({} bytes)", self.buf.len())));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > self.buf.len() {
            return Err(Error::Checkpoint(format!("implausible size {n}")));
        }
        Ok(n)
    }
}

fn write_params(w: &mut Writer, p: &MlpParams) {
    w.u32(p.arch.input as u32);
    w.u32(p.arch.output as u32);
    w.u32(p.arch.hidden.len() as u32);
    for &h in &p.arch.hidden {
        w.u32(h as u32);
    }
    w.i32(p.arch.skip_into.map_or(-1, |s| s as i32));
    for layer in &p.layers {
        w.f32s(&layer.direction);
        w.f32s(&layer.magnitude);
        w.f32s(&layer.bias);
    }
}

fn read_params(r: &mut Reader) -> Result<MlpParams> {
    let input = r.len()?;
    let output = r.len()?;
    let n = r.len()?;
    let hidden = (0..n).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
    let skip = r.i32()?;
    let arch = MlpArch {
        input,
        hidden,
        output,
        skip_into: (skip >= 0).then_some(skip as usize),
    };
    let mut params = MlpParams::init(arch.clone(), 0);
    for (l, layer) in params.layers.iter_mut().enumerate() {
        let (i, o) = (arch.layer_input(l), arch.layer_output(l));
        layer.direction = r.f32s(i * o)?;
        layer.magnitude = r.f32s(o)?;
        layer.bias = r.f32s(o)?;
    }
    Ok(params)
}

fn write_adam(w: &mut Writer, a: &AdamState) {
    for v in [a.lr, a.beta1, a.beta2, a.eps, a.clip] {
        w.f64(v);
    }
    w.u64(a.step);
    w.u32(a.m.len() as u32);
    w.f32s(&a.m);
    w.f32s(&a.v);
}

fn read_adam(r: &mut Reader) -> Result<AdamState> {
    let (lr, beta1, beta2, eps, clip) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let step = r.u64()?;
    let n = r.len()?;
    Ok(AdamState {
        lr,
        beta1,
        beta2,
        eps,
        clip,
        step,
        m: r.f32s(n)?,
        v: r.f32s(n)?,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u8(self.stage);
        w.u64(self.iteration);
        w.0.extend_from_slice(&self.config_hash);
        let skin = &self.model.skin;
        w.u8(skin.pose_conditioned as u8);
        w.u32(skin.joints as u32);
        w.u32(skin.pose_dim as u32);
        w.u32(skin.encoding.frequencies as u32);
        w.u8(skin.encoding.include_raw as u8);
        w.u32(self.model.shadow.pose_dim as u32);
        write_params(&mut w, &skin.params);
        write_params(&mut w, &self.model.albedo.params);
        write_params(&mut w, &self.model.shadow.params);
        match &self.adam {
            Some(states) => {
                w.u8(1);
                for a in states {
                    write_adam(&mut w, a);
                }
            }
            None => w.u8(0),
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, at: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let stage = r.u8()?;
        let iteration = r.u64()?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let pose_conditioned = r.u8()? != 0;
        let joints = r.len()?;
        let pose_dim = r.len()?;
        let encoding = EncodingSpec {
            frequencies: r.len()?,
            include_raw: r.u8()? != 0,
        };
        let shadow_pose_dim = r.len()?;
        let skin = SkinNet {
            params: read_params(&mut r)?,
            encoding,
            joints,
            pose_dim,
            pose_conditioned,
        };
        let albedo = AlbedoNet {
            params: read_params(&mut r)?,
            encoding,
        };
        let shadow = ShadowNet {
            params: read_params(&mut r)?,
            encoding,
            pose_dim: shadow_pose_dim,
        };
        let adam = match r.u8()? {
            0 => None,
            1 => Some([read_adam(&mut r)?, read_adam(&mut r)?, read_adam(&mut r)?]),
            other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        if r.at != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.at)));
        }
        let expect_in = encoding.dim(3) + if pose_conditioned { pose_dim } else { 0 };
        if skin.params.arch.input != expect_in || skin.params.arch.output != joints {
            return Err(Error::Checkpoint("skinning network shape disagrees with its header".into()));
        }
        Ok(Self {
            model: Model { skin, albedo, shadow },
            adam,
            stage,
            iteration,
            config_hash,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Loads a checkpoint to resume training, warning when it was written
    /// under a different configuration.
    pub fn load_for_resume(path: impl AsRef<Path>, config_hash: &[u8; 32]) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if &ckpt.config_hash != config_hash {
            log::warn!("checkpoint was written with a different configuration; resuming anyway");
        }
        Ok(ckpt)
    }
}
