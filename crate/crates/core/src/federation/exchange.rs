use std::fs;
use std::path::{Path, PathBuf};

use super::message::{parse_message_file_name, ClientUpdateMessage, GlobalModelMessage};
use crate::error::{Error, ProtocolError, Result};

/// A directory clients drop message files into and the server scans.
#[derive(Debug, Clone)]
pub struct MessageDirectory {
    dir: PathBuf,
}

impl MessageDirectory {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write_client(&self, msg: &ClientUpdateMessage) -> Result<PathBuf> {
        self.write(&msg.file_name(), &msg.matrix)
    }

    pub fn write_global(&self, msg: &GlobalModelMessage) -> Result<PathBuf> {
        self.write(&msg.file_name(), &msg.matrix)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        // Atomic: temp file, then rename.
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Every client message of `round`, ordered by client id and kind.
    pub fn read_round(&self, round: u32) -> Result<Vec<ClientUpdateMessage>> {
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut found = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !(name.starts_with("round") && name.contains("_client")) {
                continue;
            }
            let (r, client_id, role) =
                parse_message_file_name(&name).ok_or_else(|| ProtocolError::BadFileName(name.clone()))?;
            if r != round {
                continue;
            }
            let bytes = fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            let msg = ClientUpdateMessage::from_frame(client_id, round, bytes)?;
            if msg.kind.role() != role {
                return Err(ProtocolError::KindMismatch {
                    expected: role.name(),
                    found: msg.kind.role().name(),
                }
                .into());
            }
            found.push(msg);
        }
        found.sort_by_key(|m| (m.client_id, m.kind));
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::message::PayloadKind;
    use nalgebra::DMatrix;

    #[test]
    fn write_and_scan() {
        let dir = tempfile::tempdir().unwrap();
        let ex = MessageDirectory::new(dir.path().join("msgs")).unwrap();
        for (client, round) in [(2u32, 1u32), (0, 1), (1, 2)] {
            let m = ClientUpdateMessage::new(client, round, PayloadKind::MdrsCov, &DMatrix::identity(2, 2), Some(3)).unwrap();
            ex.write_client(&m).unwrap();
        }
        let round1 = ex.read_round(1).unwrap();
        assert_eq!(round1.iter().map(|m| m.client_id).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(round1[0].decode_matrix().unwrap(), DMatrix::identity(2, 2));
        assert_eq!(round1[0].count, None);

        fs::write(ex.path().join("round1_clientX_MDRS_COV.rsmx"), b"junk").unwrap();
        assert!(matches!(
            ex.read_round(1),
            Err(Error::Protocol(ProtocolError::BadFileName(_)))
        ));
    }

    #[test]
    fn role_in_name_must_match_frame() {
        let dir = tempfile::tempdir().unwrap();
        let ex = MessageDirectory::new(dir.path()).unwrap();
        let m = ClientUpdateMessage::new(0, 1, PayloadKind::EsnA, &DMatrix::zeros(1, 2), None).unwrap();
        fs::write(ex.path().join("round1_client0_ESN_B.rsmx"), &m.matrix).unwrap();
        assert!(ex.read_round(1).is_err());
    }
}
