use chrono::{DateTime, NaiveDate};
use quick_xml::events::Event;
use quick_xml::Reader;

/// One `<item>` of an RSS 2.0 feed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeedItem {
    pub title: String,
    pub link: String,
    pub outlet: String,
    pub published: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedFeed {
    pub items: Vec<FeedItem>,
    /// `opensearch:totalResults`, when the feed reports it.
    pub total_results: Option<u64>,
}

/// Parse an RSS 2.0 document. Unknown elements are ignored.
pub fn parse_feed(xml: &str) -> Result<ParsedFeed, String> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);

    let mut feed = ParsedFeed::default();
    let mut path: Vec<String> = Vec::new();
    let mut current: Option<FeedItem> = None;
    let mut saw_rss = false;
    let mut text = String::new();

    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if name == "rss" || name == "channel" {
                    saw_rss = true;
                }
                if name == "item" {
                    current = Some(FeedItem::default());
                }
                path.push(name);
                text.clear();
            }
            Ok(Event::Empty(_)) => {}
            Ok(Event::Text(t)) => {
                let s = t.unescape().map_err(|e| format!("bad text: {e}"))?;
                text.push_str(&s);
            }
            Ok(Event::CData(c)) => {
                text.push_str(&String::from_utf8_lossy(&c.into_inner()));
            }
            Ok(Event::End(e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let value = text.trim().to_string();
                match (name.as_str(), current.as_mut()) {
                    ("item", Some(_)) => feed.items.push(current.take().expect("inside item")),
                    ("title", Some(item)) => item.title = value,
                    ("link", Some(item)) => item.link = value,
                    ("source", Some(item)) => item.outlet = value,
                    ("pubDate", Some(item)) => {
                        item.published = DateTime::parse_from_rfc2822(&value)
                            .ok()
                            .map(|d| d.date_naive())
                            .or_else(|| NaiveDate::parse_from_str(&value, "%Y-%m-%d").ok());
                    }
                    ("opensearch:totalResults", None) => {
                        feed.total_results = value.parse().ok();
                    }
                    _ => {}
                }
                path.pop();
                text.clear();
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => {
                return Err(format!("XML error at byte {}: {e}", reader.error_position()));
            }
        }
    }
    if !saw_rss {
        return Err("document is not an RSS feed".into());
    }
    Ok(feed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FEED: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<rss version="2.0" xmlns:opensearch="http://a9.com/-/spec/opensearch/1.1/">
<channel>
  <title>"screening" - News</title>
  <opensearch:totalResults>42</opensearch:totalResults>
  <item>
    <title>Home test &amp; app - Daily</title>
    <link>https://news.example/rss/articles/a1</link>
    <pubDate>Tue, 05 Mar 2024 08:00:00 GMT</pubDate>
    <source url="https://daily.example">Daily</source>
  </item>
  <item>
    <title><![CDATA[Second <b>item</b>]]></title>
    <link>https://news.example/rss/articles/a2</link>
  </item>
</channel>
</rss>"#;

    #[test]
    fn parses_items() {
        let feed = parse_feed(FEED).unwrap();
        assert_eq!(feed.total_results, Some(42));
        assert_eq!(feed.items.len(), 2);
        assert_eq!(feed.items[0].title, "Home test & app - Daily");
        assert_eq!(feed.items[0].outlet, "Daily");
        assert_eq!(feed.items[0].published, NaiveDate::from_ymd_opt(2024, 3, 5));
        assert_eq!(feed.items[1].title, "Second <b>item</b>");
        assert_eq!(feed.items[1].published, None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_feed("<html><body>blocked</body></html>").is_err());
        assert!(parse_feed("<rss><channel><item></channel></rss>").is_err());
    }

    #[test]
    fn empty_channel() {
        let feed = parse_feed("<rss version=\"2.0\"><channel><title>x</title></channel></rss>").unwrap();
        assert!(feed.items.is_empty());
        assert_eq!(feed.total_results, None);
    }
}
